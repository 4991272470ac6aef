#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "autotune/trajectory.hpp"

namespace autotune {

enum class SegmentClass { Flat, Ascent, Descent, Steep };

std::string to_string(SegmentClass c);
SegmentClass segment_class_from_string(const std::string& s);
inline constexpr SegmentClass kAllSegmentClasses[] = {
    SegmentClass::Flat, SegmentClass::Ascent, SegmentClass::Descent, SegmentClass::Steep};

struct SegmentationConfig {
  double height_threshold = 1.0;  // m per stride point
  double min_duration = 2.0;      // s
  double stride = 0.5;            // s
  double steep_slope = 45.0;      // degrees

  void validate() const;
};

/// Half-open tick interval [start, end) of the reference.
struct Segment {
  std::size_t start = 0;
  std::size_t end = 0;
  SegmentClass label = SegmentClass::Flat;

  std::size_t ticks() const { return end - start; }
  bool operator==(const Segment&) const = default;
};

struct SegmentPlan {
  std::vector<Segment> segments;
  SegmentationConfig config;

  std::size_t size() const { return segments.size(); }
  /// Index of the segment owning `tick`; boundaries belong to the right.
  std::size_t segment_at(std::size_t tick) const;
  std::size_t total_ticks() const { return segments.empty() ? 0 : segments.back().end; }
};

/// A single segment spanning the whole reference.
SegmentPlan single_segment_plan(const ReferenceTrajectory& ref);

/// Label every stride point from its altitude change to the next one. The
/// last point repeats its predecessor's label.
std::vector<SegmentClass> classify_points(const ReferenceTrajectory& ref,
                                          const SegmentationConfig& cfg);

/// Merge equal neighbours, then fold runs shorter than min_duration into the
/// longer neighbour (ties go to the preceding one). Returns tick intervals
/// covering [0, n_ticks).
std::vector<Segment> cluster_segments(const std::vector<SegmentClass>& classes,
                                      const SegmentationConfig& cfg,
                                      std::size_t stride_ticks, std::size_t n_ticks);

/// Recursively halve ascent/descent segments steeper than steep_slope; the
/// first half of each split is labelled Steep. Segments shorter than
/// min_duration are not split.
std::vector<Segment> split_steep(const std::vector<Segment>& segments,
                                 const ReferenceTrajectory& ref,
                                 const SegmentationConfig& cfg);

SegmentPlan segment_trajectory(const ReferenceTrajectory& ref,
                               const SegmentationConfig& cfg = {});

/// Line slope from the first to the last point of [start, end], radians.
double segment_slope(const ReferenceTrajectory& ref, std::size_t start, std::size_t end);

std::size_t stride_ticks(const ReferenceTrajectory& ref, const SegmentationConfig& cfg);

}  // namespace autotune
