#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "autotune/baselines.hpp"
#include "autotune/config.hpp"
#include "autotune/evaluation.hpp"
#include "autotune/segmentation.hpp"
#include "autotune/trajectory.hpp"
#include "autotune/tuner.hpp"
#include "autotune/warmstart.hpp"

namespace autotune {

inline constexpr const char* kVersion = AUTOTUNE_VERSION;

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitConfig = 2, kExitTargetNotMet = 3 };

enum class InitKind { Fallback, Degraded, WarmStart, Explicit };

struct ExperimentConfig {
  // Track: "circle", "drop" or "csv".
  std::string track_kind = "drop";
  std::filesystem::path track_path;
  bool ned = false;
  TrackSpec track;
  double track_dt = 0.005;

  bool segment = true;
  SegmentationConfig segmentation;
  EvaluationConfig eval;
  TunerConfig tuner;

  InitKind init = InitKind::Degraded;
  double init_scale = 0.01;
  std::vector<double> init_params;  // per-segment block repeated when 5 long

  std::string method = "autotune";
  RandomSearchConfig random;
  PsoConfig pso;
  CmaEsConfig cmaes;

  std::filesystem::path model_path;
  std::filesystem::path dataset_path;
  GbrtConfig gbrt;

  std::filesystem::path params_path;  // evaluate: best_params.json
  std::size_t eval_seeds = 4;
  bool write_trace = false;

  std::string landscape_x = "q_pos_xy";
  std::string landscape_y = "q_velocity";
  std::vector<double> landscape_x_values{0.5, 5, 50, 500};
  std::vector<double> landscape_y_values{0.1, 1, 10, 100};
  int landscape_segment = -1;  // -1 applies to every segment

  std::vector<std::pair<double, double>> ablate_grid{{1.0, 2.0}, {30.0, 2.0}};
  std::size_t ablate_seeds = 10;
  std::size_t ablate_seg_budget = 100;
  std::size_t ablate_comp_budget = 300;

  std::vector<std::string> harvest_tracks{"drop:0.8", "drop:0.9", "drop:1.1", "circle:8", "circle:10"};
  std::size_t harvest_seeds = 1;

  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::filesystem::path out_dir = "out";

  /// Every resolved key except the output directory and the job count,
  /// which do not affect results.
  std::map<std::string, std::string> resolved() const;
  /// `key = value` lines of resolved().
  std::string to_text() const;
};

/// Reads every known key, applies defaults and validates. Unknown keys and
/// invalid values raise ConfigError.
ExperimentConfig parse_experiment(const KeyValueConfig& kv);
ExperimentConfig load_experiment(const std::filesystem::path& path,
                                 const std::vector<std::string>& overrides = {});

/// Reference and segment plan of an experiment.
struct Workload {
  ReferenceTrajectory ref;
  SegmentPlan plan;
};

Workload build_workload(const ExperimentConfig& cfg);
ReferenceTrajectory build_reference(const ExperimentConfig& cfg);
SegmentPlan build_plan(const ExperimentConfig& cfg, const ReferenceTrajectory& ref);

/// Loads the model file, or trains one on the dataset file.
WarmStartModel load_or_train_model(const ExperimentConfig& cfg);

/// Initial parameters per the init settings. `warning` is set when a
/// warm-start prediction fell back to defaults.
ParamVector initial_params(const ExperimentConfig& cfg, const Workload& w, bool* warning = nullptr);

/// Runs the configured method on a workload from `w0`.
SearchResult run_method(const std::string& method, const ExperimentConfig& cfg, const Workload& w,
                        const ParamVector& w0, std::uint64_t seed, std::size_t budget);

/// Header line plus one line per record.
std::string history_jsonl(const SearchResult& r, const ExperimentConfig& cfg,
                          const std::string& command, const std::string& method);
nlohmann::json record_json(const SearchRecord& r);

/// Writes through a sibling temporary file and a rename.
void write_atomic(const std::filesystem::path& path, const std::string& content);
/// `# key = value` comment block for CSV outputs.
std::string csv_preamble(const ExperimentConfig& cfg, const std::string& command);

int cmd_tune(const ExperimentConfig& cfg, std::ostream& log);
int cmd_baseline(const ExperimentConfig& cfg, std::ostream& log);
int cmd_evaluate(const ExperimentConfig& cfg, std::ostream& log);
int cmd_segment(const ExperimentConfig& cfg, std::ostream& log);
int cmd_ablate_segmentation(const ExperimentConfig& cfg, std::ostream& log);
int cmd_ablate_components(const ExperimentConfig& cfg, std::ostream& log);
int cmd_landscape(const ExperimentConfig& cfg, std::ostream& log);
int cmd_harvest(const ExperimentConfig& cfg, std::ostream& log);
int cmd_tracks(const ExperimentConfig& cfg, std::ostream& log);

/// Dispatches by subcommand name, mapping errors to exit codes.
int run_command(const std::string& name, const ExperimentConfig& cfg, std::ostream& log,
                std::ostream& err);

const std::vector<std::string>& command_names();

}  // namespace autotune
