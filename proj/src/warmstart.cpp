#include "autotune/warmstart.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "autotune/objective.hpp"

namespace autotune {

namespace {

constexpr const char* kFeatureNames[kFeatureCount] = {"n_points", "slope", "dz",
                                                      "min_v",    "mean_v", "max_v",
                                                      "min_a",    "mean_a", "max_a"};

constexpr const char* kTargetNames[kParamsPerSegment] = {"q_pos_xy", "q_pos_z", "q_attitude",
                                                         "q_velocity", "horizon_len"};

const char* kCsvColumns[] = {"class",    "n_points", "slope",      "dz",         "mean_v",
                             "mean_a",   "q_pos_xy", "q_pos_z",    "q_attitude", "q_velocity",
                             "horizon_len", "min_v", "max_v",      "min_a",      "max_a"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::vector<std::string> subset_names(const std::vector<Feature>& s) {
  std::vector<std::string> names;
  for (Feature f : s) names.emplace_back(to_string(f));
  return names;
}

std::vector<std::string> sorted_names(const std::vector<Feature>& s) {
  auto names = subset_names(s);
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

const char* to_string(Feature f) { return kFeatureNames[static_cast<int>(f)]; }

Feature feature_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (s == kFeatureNames[i]) return static_cast<Feature>(i);
  }
  throw std::invalid_argument("unknown feature '" + s + "'");
}

std::vector<Feature> all_features() {
  std::vector<Feature> out;
  for (std::size_t i = 0; i < kFeatureCount; ++i) out.push_back(static_cast<Feature>(i));
  return out;
}

std::vector<Feature> default_features() {
  return {Feature::NPoints, Feature::Slope, Feature::Dz, Feature::MeanV, Feature::MeanA};
}

double SegmentFeatures::get(Feature f) const {
  switch (f) {
    case Feature::NPoints: return n_points;
    case Feature::Slope: return slope;
    case Feature::Dz: return dz;
    case Feature::MinV: return min_v;
    case Feature::MeanV: return mean_v;
    case Feature::MaxV: return max_v;
    case Feature::MinA: return min_a;
    case Feature::MeanA: return mean_a;
    case Feature::MaxA: return max_a;
  }
  return 0.0;
}

std::vector<double> SegmentFeatures::select(const std::vector<Feature>& subset) const {
  std::vector<double> x;
  x.reserve(subset.size());
  for (Feature f : subset) x.push_back(get(f));
  return x;
}

bool SegmentFeatures::finite() const {
  for (Feature f : all_features()) {
    if (!std::isfinite(get(f))) return false;
  }
  return true;
}

SegmentFeatures extract_features(const ReferenceTrajectory& ref, const Segment& segment) {
  return extract_features(ref, segment, reference_accelerations(ref));
}

SegmentFeatures extract_features(const ReferenceTrajectory& ref, const Segment& segment,
                                 const std::vector<Vec3>& accelerations) {
  if (segment.end <= segment.start || segment.end > ref.size()) {
    throw std::invalid_argument("segment outside the reference");
  }
  SegmentFeatures f;
  f.n_points = static_cast<double>(segment.ticks());
  const Vec3& a = ref.samples[segment.start].position;
  const Vec3& b = ref.samples[std::min(segment.end, ref.size() - 1)].position;
  f.dz = b.z() - a.z();
  const double horizontal = (b - a).head<2>().norm();
  f.slope = horizontal > 0.0 ? std::atan(std::abs(f.dz) / horizontal) : std::numbers::pi / 2;

  f.min_v = f.min_a = std::numeric_limits<double>::infinity();
  f.max_v = f.max_a = 0.0;
  for (std::size_t i = segment.start; i < segment.end; ++i) {
    const double v = ref.samples[i].velocity.norm();
    const double acc = accelerations[i].norm();
    f.mean_v += v;
    f.mean_a += acc;
    f.min_v = std::min(f.min_v, v);
    f.max_v = std::max(f.max_v, v);
    f.min_a = std::min(f.min_a, acc);
    f.max_a = std::max(f.max_a, acc);
  }
  f.mean_v /= f.n_points;
  f.mean_a /= f.n_points;
  return f;
}

std::vector<DatasetRow> TuningDataset::of_class(SegmentClass c) const {
  std::vector<DatasetRow> out;
  for (const auto& r : rows) {
    if (r.label == c) out.push_back(r);
  }
  return out;
}

std::string TuningDataset::to_csv() const {
  std::string out;
  for (std::size_t i = 0; i < std::size(kCsvColumns); ++i) {
    out += (i ? "," : "");
    out += kCsvColumns[i];
  }
  out += '\n';
  for (const auto& r : rows) {
    const auto& f = r.features;
    const auto& p = r.params;
    out += to_string(r.label);
    for (double v : {f.n_points, f.slope, f.dz, f.mean_v, f.mean_a, p.q_pos_xy, p.q_pos_z,
                     p.q_attitude, p.q_velocity, static_cast<double>(p.horizon_len), f.min_v,
                     f.max_v, f.min_a, f.max_a}) {
      out += ',' + fmt(v);
    }
    out += '\n';
  }
  return out;
}

void TuningDataset::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_csv();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

TuningDataset TuningDataset::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  std::string line;
  while (std::getline(in, line) && (line.empty() || line[0] == '#')) {
  }
  if (line.empty() || line[0] == '#') throw std::runtime_error(path.string() + ": empty dataset");
  const auto header = split_csv(line);
  auto column = [&](const std::string& name, bool required) -> int {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      if (required) throw std::runtime_error(path.string() + ": missing column '" + name + "'");
      return -1;
    }
    return static_cast<int>(it - header.begin());
  };
  int col[std::size(kCsvColumns)];
  for (std::size_t i = 0; i < std::size(kCsvColumns); ++i) col[i] = column(kCsvColumns[i], i < 11);

  TuningDataset ds;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    ++row;
    const auto cells = split_csv(line);
    auto num = [&](int c, double fallback) {
      if (c < 0) return fallback;
      if (static_cast<std::size_t>(c) >= cells.size()) {
        throw std::runtime_error(path.string() + ": row " + std::to_string(row) + " is short");
      }
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[c], &used);
        if (used != cells[c].size() || !std::isfinite(v)) throw std::invalid_argument("");
        return v;
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ": row " + std::to_string(row) + ": bad value '" +
                                 cells[c] + "'");
      }
    };
    DatasetRow r;
    if (cells.empty()) throw std::runtime_error(path.string() + ": row " + std::to_string(row) + " is short");
    try {
      r.label = segment_class_from_string(cells.at(col[0]));
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ": row " + std::to_string(row) + ": bad class");
    }
    auto& f = r.features;
    f.n_points = num(col[1], 0);
    f.slope = num(col[2], 0);
    f.dz = num(col[3], 0);
    f.mean_v = num(col[4], 0);
    f.mean_a = num(col[5], 0);
    r.params.q_pos_xy = num(col[6], 0);
    r.params.q_pos_z = num(col[7], 0);
    r.params.q_attitude = num(col[8], 0);
    r.params.q_velocity = num(col[9], 0);
    const double h = num(col[10], 0);
    r.params.horizon_len = static_cast<int>(std::lround(h));
    f.min_v = num(col[11], f.mean_v);
    f.max_v = num(col[12], f.mean_v);
    f.min_a = num(col[13], f.mean_a);
    f.max_a = num(col[14], f.mean_a);
    if (h != r.params.horizon_len || !r.params.valid(std::numeric_limits<int>::max())) {
      throw std::runtime_error(path.string() + ": row " + std::to_string(row) +
                               ": parameters out of range");
    }
    ds.rows.push_back(r);
  }
  return ds;
}

std::array<double, kParamsPerSegment> ClassModel::predict(const SegmentFeatures& f) const {
  const auto x = f.select(features);
  std::array<double, kParamsPerSegment> out{};
  for (std::size_t t = 0; t < kParamsPerSegment; ++t) out[t] = targets[t].predict(x);
  return out;
}

namespace {

ClassModel fit_class(const std::vector<DatasetRow>& rows, const std::vector<Feature>& features,
                     const GbrtConfig& cfg) {
  ClassModel m;
  m.features = features;
  m.n_rows = rows.size();
  std::vector<std::vector<double>> X;
  for (const auto& r : rows) X.push_back(r.features.select(features));
  for (std::size_t t = 0; t < kParamsPerSegment; ++t) {
    std::vector<double> y;
    for (const auto& r : rows) y.push_back(r.params.to_array()[t]);
    m.targets[t] = GradientBoosting::fit(X, y, cfg);
  }
  return m;
}

}  // namespace

WarmStartModel WarmStartModel::train(const TuningDataset& data, const GbrtConfig& cfg,
                                     const std::map<SegmentClass, std::vector<Feature>>& features,
                                     std::size_t jobs) {
  std::vector<SegmentClass> present;
  for (SegmentClass c : kAllSegmentClasses) {
    if (!data.of_class(c).empty()) present.push_back(c);
  }
  std::vector<ClassModel> fitted(present.size());
  parallel_for(present.size(), jobs, [&](std::size_t i) {
    auto it = features.find(present[i]);
    const auto subset = it != features.end() ? it->second : default_features();
    if (subset.empty()) throw std::invalid_argument("empty feature subset");
    fitted[i] = fit_class(data.of_class(present[i]), subset, cfg);
  });
  WarmStartModel m;
  m.gbrt = cfg;
  for (std::size_t i = 0; i < present.size(); ++i) m.classes[present[i]] = std::move(fitted[i]);
  return m;
}

nlohmann::json WarmStartModel::to_json() const {
  nlohmann::json j;
  j["format"] = "autotune-warmstart";
  j["version"] = 1;
  j["n_trees"] = gbrt.n_trees;
  j["max_depth"] = gbrt.max_depth;
  j["learning_rate"] = gbrt.learning_rate;
  j["classes"] = nlohmann::json::object();
  for (const auto& [c, m] : classes) {
    nlohmann::json jc;
    jc["features"] = subset_names(m.features);
    jc["n_rows"] = m.n_rows;
    for (std::size_t t = 0; t < kParamsPerSegment; ++t) jc["targets"][kTargetNames[t]] = m.targets[t].to_json();
    j["classes"][to_string(c)] = std::move(jc);
  }
  return j;
}

WarmStartModel WarmStartModel::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != "autotune-warmstart") {
    throw std::runtime_error("not a warm-start model file");
  }
  WarmStartModel m;
  m.gbrt.n_trees = j.at("n_trees").get<int>();
  m.gbrt.max_depth = j.at("max_depth").get<int>();
  m.gbrt.learning_rate = j.at("learning_rate").get<double>();
  for (const auto& [name, jc] : j.at("classes").items()) {
    ClassModel cm;
    for (const auto& f : jc.at("features")) cm.features.push_back(feature_from_string(f.get<std::string>()));
    cm.n_rows = jc.value("n_rows", std::size_t{0});
    for (std::size_t t = 0; t < kParamsPerSegment; ++t) {
      cm.targets[t] = GradientBoosting::from_json(jc.at("targets").at(kTargetNames[t]));
      if (cm.targets[t].n_features() != cm.features.size()) {
        throw std::runtime_error("warm-start model: feature count mismatch");
      }
    }
    m.classes[segment_class_from_string(name)] = std::move(cm);
  }
  return m;
}

void WarmStartModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json().dump(1) << '\n';
}

WarmStartModel WarmStartModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

InitPrediction predict_init(const ReferenceTrajectory& ref, const SegmentPlan& plan,
                            const WarmStartModel& model, int horizon_max) {
  InitPrediction out;
  const auto acc = reference_accelerations(ref);
  for (const Segment& seg : plan.segments) {
    auto it = model.classes.find(seg.label);
    if (it == model.classes.end()) {
      out.params.per_segment.push_back(SegmentParams::fallback());
      out.warning = true;
      if (std::find(out.missing.begin(), out.missing.end(), seg.label) == out.missing.end()) {
        out.missing.push_back(seg.label);
      }
      continue;
    }
    const auto pred = it->second.predict(extract_features(ref, seg, acc));
    out.params.per_segment.push_back(SegmentParams::from_array(pred, horizon_max));
  }
  return out;
}

double cv_rmse(const TuningDataset& data, const std::vector<Feature>& subset,
               std::size_t k_folds, const GbrtConfig& cfg) {
  double sq = 0.0;
  std::size_t count = 0;
  for (SegmentClass c : kAllSegmentClasses) {
    const auto rows = data.of_class(c);
    if (rows.empty()) continue;
    if (rows.size() < k_folds) {
      throw std::invalid_argument("class " + to_string(c) + " has fewer rows than folds");
    }
    for (std::size_t k = 0; k < k_folds; ++k) {
      std::vector<DatasetRow> train, test;
      for (std::size_t i = 0; i < rows.size(); ++i) (i % k_folds == k ? test : train).push_back(rows[i]);
      const ClassModel m = fit_class(train, subset, cfg);
      for (const auto& r : test) {
        const auto p = m.predict(r.features);
        const auto y = r.params.to_array();
        for (std::size_t t = 0; t < kParamsPerSegment; ++t) {
          sq += (p[t] - y[t]) * (p[t] - y[t]);
          ++count;
        }
      }
    }
  }
  if (count == 0) throw std::invalid_argument("empty dataset");
  return std::sqrt(sq / static_cast<double>(count));
}

std::vector<Feature> select_features_cv(const TuningDataset& data,
                                        const std::vector<Feature>& candidates,
                                        std::size_t k_folds, const GbrtConfig& cfg,
                                        std::size_t jobs) {
  if (candidates.empty()) throw std::invalid_argument("empty feature pool");
  if (candidates.size() > kMaxFeaturePool) {
    throw std::invalid_argument("feature pool larger than " + std::to_string(kMaxFeaturePool));
  }
  if (k_folds < 2) throw std::invalid_argument("need at least 2 folds");

  const std::size_t n_subsets = (std::size_t{1} << candidates.size()) - 1;
  std::vector<std::vector<Feature>> subsets(n_subsets);
  for (std::size_t mask = 1; mask <= n_subsets; ++mask) {
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (mask & (std::size_t{1} << i)) subsets[mask - 1].push_back(candidates[i]);
    }
  }
  std::vector<double> err(n_subsets);
  parallel_for(n_subsets, jobs, [&](std::size_t i) { err[i] = cv_rmse(data, subsets[i], k_folds, cfg); });

  std::size_t best = 0;
  for (std::size_t i = 1; i < n_subsets; ++i) {
    const double tol = 1e-12 * std::max(1.0, std::abs(err[best]));
    if (err[i] < err[best] - tol) {
      best = i;
    } else if (std::abs(err[i] - err[best]) <= tol) {
      const auto& a = subsets[i];
      const auto& b = subsets[best];
      if (a.size() < b.size() || (a.size() == b.size() && sorted_names(a) < sorted_names(b))) best = i;
    }
  }
  return subsets[best];
}

}  // namespace autotune
