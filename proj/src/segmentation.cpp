#include "autotune/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace autotune {

namespace {

struct Run {
  SegmentClass label;
  std::size_t ticks;
};

void coalesce(std::vector<Run>& runs) {
  std::vector<Run> out;
  for (const Run& r : runs) {
    if (!out.empty() && out.back().label == r.label) {
      out.back().ticks += r.ticks;
    } else {
      out.push_back(r);
    }
  }
  runs.swap(out);
}

void split_recursive(const Segment& seg, const ReferenceTrajectory& ref,
                     const SegmentationConfig& cfg, std::vector<Segment>& out) {
  const double limit = cfg.steep_slope * std::numbers::pi / 180.0;
  const bool too_short = static_cast<double>(seg.ticks()) * ref.dt < cfg.min_duration;
  if (seg.ticks() < 2 || too_short || segment_slope(ref, seg.start, seg.end) <= limit) {
    out.push_back(seg);
    return;
  }
  const std::size_t mid = seg.start + seg.ticks() / 2;
  out.push_back({seg.start, mid, SegmentClass::Steep});
  split_recursive({mid, seg.end, seg.label}, ref, cfg, out);
}

}  // namespace

std::string to_string(SegmentClass c) {
  switch (c) {
    case SegmentClass::Flat: return "flat";
    case SegmentClass::Ascent: return "ascent";
    case SegmentClass::Descent: return "descent";
    case SegmentClass::Steep: return "steep";
  }
  return "flat";
}

SegmentClass segment_class_from_string(const std::string& s) {
  for (SegmentClass c : kAllSegmentClasses) {
    if (to_string(c) == s) return c;
  }
  throw std::invalid_argument("unknown segment class '" + s + "'");
}

void SegmentationConfig::validate() const {
  if (!(height_threshold > 0.0) || !(min_duration > 0.0) || !(stride > 0.0) ||
      !(steep_slope > 0.0)) {
    throw std::invalid_argument("segmentation parameters must be positive");
  }
}

std::size_t SegmentPlan::segment_at(std::size_t tick) const {
  const auto it = std::upper_bound(segments.begin(), segments.end(), tick,
                                   [](std::size_t t, const Segment& s) { return t < s.start; });
  if (it == segments.begin()) return 0;
  return static_cast<std::size_t>(it - segments.begin()) - 1;
}

SegmentPlan single_segment_plan(const ReferenceTrajectory& ref) {
  SegmentPlan plan;
  plan.segments.push_back({0, ref.size(), SegmentClass::Flat});
  return plan;
}

std::size_t stride_ticks(const ReferenceTrajectory& ref, const SegmentationConfig& cfg) {
  if (cfg.stride < ref.dt * (1.0 - 1e-9)) {
    throw std::invalid_argument("segmentation stride shorter than reference dt");
  }
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.stride / ref.dt)));
}

std::vector<SegmentClass> classify_points(const ReferenceTrajectory& ref,
                                          const SegmentationConfig& cfg) {
  const std::size_t st = stride_ticks(ref, cfg);
  std::vector<double> heights;
  for (std::size_t i = 0; i < ref.size(); i += st) heights.push_back(ref.samples[i].position.z());
  if (heights.size() < 2) return {SegmentClass::Flat};

  std::vector<SegmentClass> classes;
  for (std::size_t k = 0; k + 1 < heights.size(); ++k) {
    const double dh = heights[k + 1] - heights[k];
    if (dh >= cfg.height_threshold) {
      classes.push_back(SegmentClass::Ascent);
    } else if (dh <= -cfg.height_threshold) {
      classes.push_back(SegmentClass::Descent);
    } else {
      classes.push_back(SegmentClass::Flat);
    }
  }
  classes.push_back(classes.back());
  return classes;
}

std::vector<Segment> cluster_segments(const std::vector<SegmentClass>& classes,
                                      const SegmentationConfig& cfg,
                                      std::size_t stride_ticks, std::size_t n_ticks) {
  if (classes.empty()) throw std::invalid_argument("no classes to cluster");
  // Point k covers ticks [k * stride, (k + 1) * stride); the last point takes
  // whatever remains.
  std::vector<Run> runs;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const std::size_t begin = std::min(k * stride_ticks, n_ticks);
    const std::size_t end = k + 1 == classes.size() ? n_ticks : std::min((k + 1) * stride_ticks, n_ticks);
    runs.push_back({classes[k], end - begin});
  }
  coalesce(runs);

  const double tick_dt = cfg.stride / static_cast<double>(stride_ticks);
  auto duration = [&](const Run& r) { return static_cast<double>(r.ticks) * tick_dt; };
  while (runs.size() > 1) {
    std::size_t shortest = runs.size();
    for (std::size_t i = 0; i < runs.size(); ++i) {
      if (duration(runs[i]) < cfg.min_duration - 1e-9 &&
          (shortest == runs.size() || runs[i].ticks < runs[shortest].ticks)) {
        shortest = i;
      }
    }
    if (shortest == runs.size()) break;

    std::size_t into;
    if (shortest == 0) {
      into = 1;
    } else if (shortest + 1 == runs.size()) {
      into = shortest - 1;
    } else {
      into = runs[shortest + 1].ticks > runs[shortest - 1].ticks ? shortest + 1 : shortest - 1;
    }
    runs[into].ticks += runs[shortest].ticks;
    runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(shortest));
    coalesce(runs);
  }

  std::vector<Segment> out;
  std::size_t tick = 0;
  for (const Run& r : runs) {
    if (r.ticks > 0) out.push_back({tick, tick + r.ticks, r.label});
    tick += r.ticks;
  }
  if (out.empty()) out.push_back({0, n_ticks, runs.front().label});
  return out;
}

double segment_slope(const ReferenceTrajectory& ref, std::size_t start, std::size_t end) {
  const std::size_t last = std::min(end, ref.size() - 1);
  const Vec3 d = ref.samples[last].position - ref.samples[start].position;
  const double horizontal = std::hypot(d.x(), d.y());
  if (horizontal < 1e-12) return 0.5 * std::numbers::pi;
  return std::atan(std::abs(d.z()) / horizontal);
}

std::vector<Segment> split_steep(const std::vector<Segment>& segments,
                                 const ReferenceTrajectory& ref,
                                 const SegmentationConfig& cfg) {
  std::vector<Segment> out;
  for (const Segment& s : segments) {
    if (s.label == SegmentClass::Ascent || s.label == SegmentClass::Descent) {
      split_recursive(s, ref, cfg, out);
    } else {
      out.push_back(s);
    }
  }
  return out;
}

SegmentPlan segment_trajectory(const ReferenceTrajectory& ref, const SegmentationConfig& cfg) {
  cfg.validate();
  if (ref.samples.empty()) throw std::invalid_argument("empty reference");
  const auto classes = classify_points(ref, cfg);
  const auto clustered = cluster_segments(classes, cfg, stride_ticks(ref, cfg), ref.size());
  SegmentPlan plan;
  plan.config = cfg;
  plan.segments = split_steep(clustered, ref, cfg);
  return plan;
}

}  // namespace autotune
