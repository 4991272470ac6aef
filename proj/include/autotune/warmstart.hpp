#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "autotune/gbrt.hpp"
#include "autotune/mpc.hpp"
#include "autotune/segmentation.hpp"
#include "autotune/trajectory.hpp"

namespace autotune {

enum class Feature { NPoints, Slope, Dz, MinV, MeanV, MaxV, MinA, MeanA, MaxA };

inline constexpr std::size_t kFeatureCount = 9;
inline constexpr std::size_t kMaxFeaturePool = 16;

const char* to_string(Feature f);
Feature feature_from_string(const std::string& s);
std::vector<Feature> all_features();
/// n_points, slope, dz, mean_v, mean_a.
std::vector<Feature> default_features();

struct SegmentFeatures {
  double n_points = 0.0;
  double slope = 0.0;  // rad, in [0, pi/2]
  double dz = 0.0;     // m, last minus first
  double min_v = 0.0;
  double mean_v = 0.0;
  double max_v = 0.0;
  double min_a = 0.0;
  double mean_a = 0.0;
  double max_a = 0.0;

  double get(Feature f) const;
  std::vector<double> select(const std::vector<Feature>& subset) const;
  bool finite() const;
};

SegmentFeatures extract_features(const ReferenceTrajectory& ref, const Segment& segment);
/// Same, with reference accelerations precomputed.
SegmentFeatures extract_features(const ReferenceTrajectory& ref, const Segment& segment,
                                 const std::vector<Vec3>& accelerations);

struct DatasetRow {
  SegmentClass label = SegmentClass::Flat;
  SegmentFeatures features;
  SegmentParams params;
};

/// Tuned segments harvested from successful runs.
struct TuningDataset {
  std::vector<DatasetRow> rows;

  std::vector<DatasetRow> of_class(SegmentClass c) const;

  static TuningDataset load_csv(const std::filesystem::path& path);
  void save_csv(const std::filesystem::path& path) const;
  std::string to_csv() const;
};

/// Regressors for one segment class: one per tuned parameter.
struct ClassModel {
  std::vector<Feature> features;
  std::array<GradientBoosting, kParamsPerSegment> targets;
  std::size_t n_rows = 0;

  std::array<double, kParamsPerSegment> predict(const SegmentFeatures& f) const;
};

struct WarmStartModel {
  GbrtConfig gbrt;
  std::map<SegmentClass, ClassModel> classes;

  bool empty() const { return classes.empty(); }
  bool has(SegmentClass c) const { return classes.count(c) != 0; }

  /// Fits every class present in the dataset. Classes missing from
  /// `features` use default_features().
  static WarmStartModel train(const TuningDataset& data, const GbrtConfig& cfg = {},
                              const std::map<SegmentClass, std::vector<Feature>>& features = {},
                              std::size_t jobs = 1);

  nlohmann::json to_json() const;
  static WarmStartModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static WarmStartModel load(const std::filesystem::path& path);
};

struct InitPrediction {
  ParamVector params;
  bool warning = false;  // some segment fell back to the defaults
  std::vector<SegmentClass> missing;
};

/// Per-segment prediction clamped into the valid parameter box; classes the
/// model lacks get SegmentParams::fallback().
InitPrediction predict_init(const ReferenceTrajectory& ref, const SegmentPlan& plan,
                            const WarmStartModel& model, int horizon_max = 40);

/// Exhaustive subset search minimizing k-fold cross-validated RMSE over all
/// five targets, pooled across classes. Fold of row i is i % k within its
/// class. Ties go to the smaller subset, then the lexicographically first
/// list of feature names.
std::vector<Feature> select_features_cv(const TuningDataset& data,
                                        const std::vector<Feature>& candidates,
                                        std::size_t k_folds, const GbrtConfig& cfg = {},
                                        std::size_t jobs = 1);

/// Cross-validated RMSE of one subset.
double cv_rmse(const TuningDataset& data, const std::vector<Feature>& subset,
               std::size_t k_folds, const GbrtConfig& cfg = {});

}  // namespace autotune
