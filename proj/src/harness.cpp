#include "autotune/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>

namespace autotune {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num_text(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// Tick times, rounded to drop float noise from i * dt.
std::string time_text(double t) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, t, std::chars_format::general, 10);
  return std::string(buf, r.ptr);
}

template <typename T>
std::string join(const std::vector<T>& xs, const std::string& sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    if constexpr (std::is_same_v<T, double>) {
      out += num_text(xs[i]);
    } else if constexpr (std::is_same_v<T, std::string>) {
      out += xs[i];
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

const char* init_name(InitKind k) {
  switch (k) {
    case InitKind::Fallback: return "fallback";
    case InitKind::Degraded: return "degraded";
    case InitKind::WarmStart: return "warmstart";
    case InitKind::Explicit: return "explicit";
  }
  return "?";
}

InitKind init_from_name(const std::string& s) {
  for (InitKind k : {InitKind::Fallback, InitKind::Degraded, InitKind::WarmStart, InitKind::Explicit}) {
    if (s == init_name(k)) return k;
  }
  throw ConfigError("init.kind: unknown value '" + s + "'");
}

const std::vector<std::string> kMethods{"autotune", "random", "pso", "cmaes", "regressor"};

// Reads fields from a KeyValueConfig, or writes their resolved values, so
// that each key is spelled once.
class Binder {
 public:
  explicit Binder(const KeyValueConfig& in) : in_(&in) {}
  explicit Binder(std::map<std::string, std::string>& out) : out_(&out) {}

  bool reading() const { return in_ != nullptr; }

  void num(const std::string& key, double& v) {
    if (in_) v = in_->get_double(key, v);
    else (*out_)[key] = num_text(v);
  }
  void integer(const std::string& key, int& v) {
    if (in_) {
      const long long r = in_->get_int(key, v);
      if (r < std::numeric_limits<int>::min() || r > std::numeric_limits<int>::max()) {
        throw ConfigError(key + ": out of range");
      }
      v = static_cast<int>(r);
    } else {
      (*out_)[key] = std::to_string(v);
    }
  }
  void count(const std::string& key, std::size_t& v) {
    if (in_) {
      const long long r = in_->get_int(key, static_cast<long long>(v));
      if (r < 0) throw ConfigError(key + ": must not be negative");
      v = static_cast<std::size_t>(r);
    } else {
      (*out_)[key] = std::to_string(v);
    }
  }
  void u64(const std::string& key, std::uint64_t& v) {
    if (in_) v = in_->get_u64(key, v);
    else (*out_)[key] = std::to_string(v);
  }
  void flag(const std::string& key, bool& v) {
    if (in_) v = in_->get_bool(key, v);
    else (*out_)[key] = v ? "true" : "false";
  }
  void text(const std::string& key, std::string& v) {
    if (in_) v = in_->get_string(key, v);
    else (*out_)[key] = v;
  }
  void path(const std::string& key, fs::path& v) {
    if (in_) v = in_->get_string(key, v.string());
    else (*out_)[key] = v.string();
  }
  void nums(const std::string& key, std::vector<double>& v) {
    if (in_) v = in_->get_doubles(key, v);
    else (*out_)[key] = join(v);
  }
  void texts(const std::string& key, std::vector<std::string>& v) {
    if (in_) v = in_->get_strings(key, v);
    else (*out_)[key] = join(v);
  }
  void counts(const std::string& key, std::vector<std::size_t>& v) {
    if (in_) {
      if (!in_->has(key)) return;
      v.clear();
      for (double d : in_->get_doubles(key, {})) {
        if (d < 0 || d != std::floor(d)) throw ConfigError(key + ": expected non-negative integers");
        v.push_back(static_cast<std::size_t>(d));
      }
    } else {
      (*out_)[key] = join(v);
    }
  }

 private:
  const KeyValueConfig* in_ = nullptr;
  std::map<std::string, std::string>* out_ = nullptr;
};

void bind(ExperimentConfig& c, Binder& b) {
  b.text("track.kind", c.track_kind);
  b.path("track.path", c.track_path);
  b.flag("track.ned", c.ned);
  b.num("track.dt", c.track_dt);
  b.num("track.radius", c.track.radius);
  b.integer("track.n_waypoints", c.track.n_waypoints);
  b.num("track.altitude", c.track.altitude);
  b.num("track.speed", c.track.speed);
  b.nums("track.leg_speeds", c.track.leg_speeds);
  b.num("track.accel_limit", c.track.accel_limit);
  b.num("track.ascent_height", c.track.ascent_height);
  b.num("track.ascent_length", c.track.ascent_length);
  b.num("track.descent_height", c.track.descent_height);
  b.num("track.descent_length", c.track.descent_length);
  b.num("track.turn_radius", c.track.turn_radius);

  b.flag("segmentation.enabled", c.segment);
  b.num("segmentation.height_threshold", c.segmentation.height_threshold);
  b.num("segmentation.min_duration", c.segmentation.min_duration);
  b.num("segmentation.stride", c.segmentation.stride);
  b.num("segmentation.steep_slope", c.segmentation.steep_slope);

  auto& v = c.eval.vehicle;
  b.num("vehicle.mass", v.mass);
  b.num("vehicle.gravity", v.gravity);
  b.num("vehicle.thrust_max", v.thrust_max);
  b.num("vehicle.pitchroll_max", v.pitchroll_max);
  b.num("vehicle.yaw_max", v.yaw_max);
  b.num("vehicle.rate_tau", v.rate_tau);
  b.num("vehicle.noise.thrust_std", v.noise.thrust_std);
  b.num("vehicle.noise.rate_std", v.noise.rate_std);

  auto& m = c.eval.mpc;
  b.num("mpc.r_thrust", m.r_thrust);
  b.num("mpc.r_pitchroll", m.r_pitchroll);
  b.num("mpc.r_yaw", m.r_yaw);
  b.num("mpc.control_freq", m.control_freq);
  b.num("mpc.horizon_step", m.horizon_step);
  b.integer("mpc.horizon_max", m.horizon_max);

  b.num("eval.pass_radius", c.eval.pass_radius);
  b.num("eval.pass_window", c.eval.pass_window);
  b.num("eval.penalty_speed", c.eval.penalty_speed);
  b.num("eval.sim_dt", c.eval.sim_dt);
  b.num("eval.crash.max_position_error", c.eval.crash.max_position_error);
  b.num("eval.crash.floor_z", c.eval.crash.floor_z);

  auto& t = c.tuner;
  b.num("tuner.sigma", t.sigma);
  b.num("tuner.shrink", t.shrink);
  b.count("tuner.budget", t.budget);
  b.counts("tuner.segment_sweep", t.segment_sweep);
  b.flag("tuner.stop_on_target", t.stop.enabled);
  b.num("tuner.target_completion", t.stop.target_completion);
  b.integer("tuner.reeval_count", t.stop.reeval_count);
  b.flag("tuner.reeval_require_all", t.stop.require_all);

  std::string init = init_name(c.init);
  b.text("init.kind", init);
  if (b.reading()) c.init = init_from_name(init);
  b.num("init.scale", c.init_scale);
  b.nums("init.params", c.init_params);

  b.text("method", c.method);
  b.num("random.std", c.random.std);
  b.count("pso.particles", c.pso.particles);
  b.num("pso.inertia", c.pso.inertia);
  b.num("pso.cognitive", c.pso.cognitive);
  b.num("pso.social", c.pso.social);
  b.num("pso.init_sigma", c.pso.init_sigma);
  b.num("pso.velocity_clamp", c.pso.velocity_clamp);
  b.num("cmaes.sigma0", c.cmaes.sigma0);
  b.count("cmaes.lambda", c.cmaes.lambda);

  b.path("warmstart.model", c.model_path);
  b.path("warmstart.dataset", c.dataset_path);
  b.integer("gbrt.n_trees", c.gbrt.n_trees);
  b.integer("gbrt.max_depth", c.gbrt.max_depth);
  b.num("gbrt.learning_rate", c.gbrt.learning_rate);

  b.path("evaluate.params", c.params_path);
  b.count("evaluate.seeds", c.eval_seeds);
  b.flag("evaluate.trace", c.write_trace);

  b.text("landscape.x", c.landscape_x);
  b.text("landscape.y", c.landscape_y);
  b.nums("landscape.x_values", c.landscape_x_values);
  b.nums("landscape.y_values", c.landscape_y_values);
  b.integer("landscape.segment", c.landscape_segment);

  std::vector<std::string> grid;
  for (const auto& [h, d] : c.ablate_grid) grid.push_back(num_text(h) + ":" + num_text(d));
  b.texts("ablate.grid", grid);
  if (b.reading()) {
    c.ablate_grid.clear();
    for (const auto& cell : grid) {
      const auto parts = split_list(cell, ':');
      if (parts.size() != 2) throw ConfigError("ablate.grid: expected height:duration, got '" + cell + "'");
      KeyValueConfig tmp;
      tmp.set("h", parts[0]);
      tmp.set("d", parts[1]);
      c.ablate_grid.emplace_back(tmp.get_double("h", 0), tmp.get_double("d", 0));
    }
  }
  b.count("ablate.seeds", c.ablate_seeds);
  b.count("ablate.seg_budget", c.ablate_seg_budget);
  b.count("ablate.comp_budget", c.ablate_comp_budget);

  b.texts("harvest.tracks", c.harvest_tracks);
  b.count("harvest.seeds", c.harvest_seeds);

  b.u64("seed", c.seed);
}

std::size_t param_index(const std::string& name) {
  static const std::vector<std::string> names{"q_pos_xy", "q_pos_z", "q_attitude", "q_velocity",
                                              "horizon_len"};
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ConfigError("unknown parameter name '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

void validate(const ExperimentConfig& c) {
  try {
    if (c.track_kind != "circle" && c.track_kind != "drop" && c.track_kind != "csv") {
      throw ConfigError("track.kind must be circle, drop or csv");
    }
    if (c.track_kind == "csv" && c.track_path.empty()) throw ConfigError("track.path is required for csv tracks");
    if (!(c.track_dt > 0.0)) throw ConfigError("track.dt must be positive");
    if (std::find(kMethods.begin(), kMethods.end(), c.method) == kMethods.end()) {
      throw ConfigError("method must be one of: " + join(kMethods));
    }
    if (!(c.init_scale >= 0.0)) throw ConfigError("init.scale must be >= 0");
    if (c.init == InitKind::Explicit && c.init_params.empty()) throw ConfigError("init.params is required for explicit init");
    if (c.init_params.size() % kParamsPerSegment != 0) throw ConfigError("init.params length must be a multiple of 5");
    if (c.eval_seeds == 0) throw ConfigError("evaluate.seeds must be >= 1");
    if (c.landscape_x_values.empty() || c.landscape_y_values.empty()) throw ConfigError("landscape grid is empty");
    param_index(c.landscape_x);
    param_index(c.landscape_y);
    if (c.ablate_grid.empty()) throw ConfigError("ablate.grid is empty");
    if (c.ablate_seeds == 0 || c.harvest_seeds == 0) throw ConfigError("seed counts must be >= 1");
    if (c.ablate_seg_budget == 0 || c.ablate_comp_budget == 0) throw ConfigError("ablation budgets must be >= 1");
    if (c.gbrt.n_trees < 1 || c.gbrt.max_depth < 0 || !(c.gbrt.learning_rate > 0.0)) {
      throw ConfigError("gbrt settings are invalid");
    }
    if (c.tuner.stop.reeval_count < 0) throw ConfigError("tuner.reeval_count must be >= 0");
    c.segmentation.validate();
    c.eval.validate();
    c.tuner.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

json config_json(const ExperimentConfig& cfg) {
  json j = json::object();
  for (const auto& [k, v] : cfg.resolved()) j[k] = v;
  return j;
}

json header_json(const ExperimentConfig& cfg, const std::string& command) {
  return {{"type", "header"}, {"version", kVersion}, {"command", command}, {"config", config_json(cfg)}};
}

json plan_json(const SegmentPlan& plan, double dt) {
  json segs = json::array();
  for (const auto& s : plan.segments) {
    segs.push_back({{"label", to_string(s.label)},
                    {"start_tick", s.start},
                    {"end_tick", s.end},
                    {"t_start", static_cast<double>(s.start) * dt},
                    {"t_end", static_cast<double>(s.end) * dt}});
  }
  return segs;
}

json params_json(const ParamVector& w) {
  json out = json::array();
  for (const auto& p : w.per_segment) {
    out.push_back({{"q_pos_xy", p.q_pos_xy},
                   {"q_pos_z", p.q_pos_z},
                   {"q_attitude", p.q_attitude},
                   {"q_velocity", p.q_velocity},
                   {"horizon_len", p.horizon_len}});
  }
  return out;
}

std::string median_text(std::vector<double> xs) {
  if (xs.empty()) return "";
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return num_text(n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]));
}

void write_search_outputs(const ExperimentConfig& cfg, const std::string& command,
                          const std::string& method, const Workload& w, const ParamVector& w0,
                          const SearchResult& r) {
  const int hmax = cfg.eval.mpc.horizon_max;
  write_atomic(cfg.out_dir / "history.jsonl", history_jsonl(r, cfg, command, method));
  json best = header_json(cfg, command);
  best["type"] = "best_params";
  best["method"] = method;
  best["segments"] = plan_json(w.plan, w.ref.dt);
  best["initial_params"] = w0.flatten();
  best["params"] = r.best.empty() ? json::array() : json(r.best);
  best["per_segment"] = r.best.empty() ? json::array() : params_json(ParamVector::from_flat(r.best, hmax));
  best["target_met"] = r.target_met;
  best["evaluations"] = r.evaluations;
  best["evaluations_to_target"] = r.evaluations_to_target ? json(*r.evaluations_to_target) : json(nullptr);
  best["best_score"] = r.best_eval.score;
  best["best_completion"] = r.best_completion;
  write_atomic(cfg.out_dir / "best_params.json", best.dump(2) + "\n");
}

void log_result(std::ostream& log, const std::string& method, const SearchResult& r) {
  log << method << ": " << r.evaluations << " evaluations, best completion "
      << num_text(r.best_completion) << "%, best score " << num_text(r.best_eval.score);
  if (r.target_met) log << ", target confirmed after " << *r.evaluations_to_target << " evaluations";
  else log << ", target not met";
  log << '\n';
}

ExperimentConfig with_track(const ExperimentConfig& base, const std::string& entry) {
  const auto parts = split_list(entry, ':');
  if (parts.size() != 2) throw ConfigError("harvest.tracks: expected kind:value, got '" + entry + "'");
  KeyValueConfig tmp;
  tmp.set("v", parts[1]);
  const double value = tmp.get_double("v", 0.0);
  if (!(value > 0.0)) throw ConfigError("harvest.tracks: value must be positive in '" + entry + "'");
  ExperimentConfig c = base;
  c.track_path.clear();
  if (parts[0] == "circle") {
    c.track_kind = "circle";
    c.track = TrackSpec{};
    c.track.kind = TrackKind::Circle;
    c.track.altitude = 5.0;
    c.track.speed = value;
  } else if (parts[0] == "drop") {
    c.track_kind = "drop";
    c.track = TrackSpec{};
    c.track.speed *= value;
    for (double& s : c.track.leg_speeds) s *= value;
  } else {
    throw ConfigError("harvest.tracks: unknown track kind '" + parts[0] + "'");
  }
  return c;
}

}  // namespace

std::map<std::string, std::string> ExperimentConfig::resolved() const {
  std::map<std::string, std::string> out;
  Binder b(out);
  ExperimentConfig copy = *this;
  bind(copy, b);
  return out;
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : resolved()) out += k + " = " + v + "\n";
  return out;
}

ExperimentConfig parse_experiment(const KeyValueConfig& kv) {
  ExperimentConfig c;
  const std::string kind = kv.get_string("track.kind", c.track_kind);
  if (kind == "circle") {
    c.track.kind = TrackKind::Circle;
    c.track.altitude = 5.0;
    c.track.speed = 10.0;
    c.track.leg_speeds.clear();
  } else if (kind == "csv") {
    c.track.kind = TrackKind::Custom;
  }
  Binder b(kv);
  bind(c, b);
  if (kv.has("vehicle.twr")) {
    if (kv.has("vehicle.thrust_max")) throw ConfigError("set vehicle.twr or vehicle.thrust_max, not both");
    const double twr = kv.get_double("vehicle.twr", 0.0);
    if (!(twr > 0.0)) throw ConfigError("vehicle.twr must be positive");
    c.eval.vehicle.set_thrust_to_weight(twr);
  }
  c.jobs = static_cast<std::size_t>(std::max<long long>(1, kv.get_int("jobs", 1)));
  c.out_dir = kv.get_string("out", c.out_dir.string());
  kv.require_all_used();
  c.tuner.horizon_max = c.eval.mpc.horizon_max;
  c.tuner.jobs = c.jobs;
  validate(c);
  return c;
}

ExperimentConfig load_experiment(const fs::path& path, const std::vector<std::string>& overrides) {
  KeyValueConfig kv = path.empty() ? KeyValueConfig{} : KeyValueConfig::load(path);
  for (const auto& o : overrides) kv.set_assignment(o);
  return parse_experiment(kv);
}

ReferenceTrajectory build_reference(const ExperimentConfig& cfg) {
  if (cfg.track_kind == "csv") return load_reference_csv(cfg.track_path, cfg.ned);
  TrackSpec spec = cfg.track;
  spec.kind = cfg.track_kind == "circle" ? TrackKind::Circle : TrackKind::Drop;
  return make_track(spec, cfg.track_dt);
}

SegmentPlan build_plan(const ExperimentConfig& cfg, const ReferenceTrajectory& ref) {
  return cfg.segment ? segment_trajectory(ref, cfg.segmentation) : single_segment_plan(ref);
}

Workload build_workload(const ExperimentConfig& cfg) {
  Workload w;
  w.ref = build_reference(cfg);
  if (w.ref.waypoints.empty()) throw ConfigError("reference has no waypoints");
  w.plan = build_plan(cfg, w.ref);
  return w;
}

WarmStartModel load_or_train_model(const ExperimentConfig& cfg) {
  if (!cfg.model_path.empty()) return WarmStartModel::load(cfg.model_path);
  if (!cfg.dataset_path.empty()) {
    return WarmStartModel::train(TuningDataset::load_csv(cfg.dataset_path), cfg.gbrt, {}, cfg.jobs);
  }
  throw ConfigError("warm start needs warmstart.model or warmstart.dataset");
}

ParamVector initial_params(const ExperimentConfig& cfg, const Workload& w, bool* warning) {
  const std::size_t n = w.plan.size();
  const int hmax = cfg.eval.mpc.horizon_max;
  if (warning) *warning = false;
  switch (cfg.init) {
    case InitKind::Fallback:
      return ParamVector::uniform(n, SegmentParams::fallback());
    case InitKind::Degraded:
      return ParamVector::uniform(n, SegmentParams::fallback()).scaled_weights(cfg.init_scale);
    case InitKind::WarmStart: {
      const auto pred = predict_init(w.ref, w.plan, load_or_train_model(cfg), hmax);
      if (warning) *warning = pred.warning;
      return pred.params;
    }
    case InitKind::Explicit: {
      std::vector<double> flat;
      if (cfg.init_params.size() == kParamsPerSegment) {
        for (std::size_t s = 0; s < n; ++s) flat.insert(flat.end(), cfg.init_params.begin(), cfg.init_params.end());
      } else if (cfg.init_params.size() == n * kParamsPerSegment) {
        flat = cfg.init_params;
      } else {
        throw ConfigError("init.params needs 5 or " + std::to_string(n * kParamsPerSegment) + " values");
      }
      const ParamVector w0 = ParamVector::from_flat(flat, hmax);
      if (w0.flatten() != flat) throw ConfigError("init.params are outside the valid range");
      return w0;
    }
  }
  return {};
}

SearchResult run_method(const std::string& method, const ExperimentConfig& cfg, const Workload& w,
                        const ParamVector& w0, std::uint64_t seed, std::size_t budget) {
  const RolloutObjective objective(w.ref, w.plan, cfg.eval);
  const int hmax = cfg.eval.mpc.horizon_max;
  if (method == "autotune") {
    TunerConfig t = cfg.tuner;
    t.seed = seed;
    t.budget = budget;
    t.jobs = cfg.jobs;
    t.horizon_max = hmax;
    return tune(objective, w0, t).search;
  }
  if (method == "regressor") {
    const auto r = regressor_only(load_or_train_model(cfg), w.ref, w.plan, objective, seed, hmax,
                                  static_cast<std::size_t>(std::max(1, cfg.tuner.stop.reeval_count)),
                                  cfg.jobs);
    SearchResult out;
    out.best = r.prediction.params.flatten();
    out.target_met = r.all_passed;
    for (const auto& e : r.evaluations) {
      SearchRecord rec;
      rec.iter = out.history.size();
      rec.score = e.score;
      rec.completion = e.completion;
      rec.penalized_time = e.penalized_time;
      rec.seed = e.seed;
      rec.params = out.best;
      out.history.push_back(rec);
      out.best_completion = std::max(out.best_completion, e.completion);
      if (out.history.size() == 1 || e.score > out.best_eval.score) out.best_eval = e;
    }
    out.evaluations = out.history.size();
    if (out.target_met) out.evaluations_to_target = out.evaluations;
    return out;
  }
  const VectorProblem problem = param_problem(objective, w.plan.size(), hmax);
  SearchConfig sc;
  sc.budget = budget;
  sc.stop = cfg.tuner.stop;
  sc.seed = seed;
  sc.jobs = cfg.jobs;
  if (method == "random") return random_search(problem, w0.flatten(), sc, cfg.random);
  if (method == "pso") return pso(problem, w0.flatten(), sc, cfg.pso);
  if (method == "cmaes") return cma_es(problem, w0.flatten(), sc, cfg.cmaes);
  throw ConfigError("unknown method '" + method + "'");
}

json record_json(const SearchRecord& r) {
  return {{"iter", r.iter},
          {"accepted", r.accepted},
          {"score", r.score},
          {"completion", r.completion},
          {"time_pen", r.penalized_time},
          {"seed", r.seed},
          {"params", r.params},
          {"active_segment", r.active_segment},
          {"reeval", r.reeval}};
}

std::string history_jsonl(const SearchResult& r, const ExperimentConfig& cfg,
                          const std::string& command, const std::string& method) {
  json header = header_json(cfg, command);
  header["method"] = method;
  std::string out = header.dump() + "\n";
  for (const auto& rec : r.history) out += record_json(rec).dump() + "\n";
  return out;
}

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string csv_preamble(const ExperimentConfig& cfg, const std::string& command) {
  std::string out = "# autotune " + std::string(kVersion) + " " + command + "\n";
  for (const auto& [k, v] : cfg.resolved()) out += "# " + k + " = " + v + "\n";
  return out;
}

int cmd_tune(const ExperimentConfig& cfg, std::ostream& log) {
  const Workload w = build_workload(cfg);
  bool warning = false;
  const ParamVector w0 = initial_params(cfg, w, &warning);
  if (warning) log << "warning: warm-start model lacks some segment classes; using defaults there\n";
  log << "tune: " << w.plan.size() << " segments, " << w.ref.waypoints.size() << " waypoints, "
      << "budget " << cfg.tuner.budget << '\n';
  const SearchResult r = run_method("autotune", cfg, w, w0, cfg.seed, cfg.tuner.budget);
  write_search_outputs(cfg, "tune", "autotune", w, w0, r);
  log_result(log, "autotune", r);
  return r.target_met ? kExitOk : kExitTargetNotMet;
}

int cmd_baseline(const ExperimentConfig& cfg, std::ostream& log) {
  const Workload w = build_workload(cfg);
  const ParamVector w0 = initial_params(cfg, w);
  const SearchResult r = run_method(cfg.method, cfg, w, w0, cfg.seed, cfg.tuner.budget);
  write_search_outputs(cfg, "baseline", cfg.method, w, w0, r);
  log_result(log, cfg.method, r);
  return r.target_met ? kExitOk : kExitTargetNotMet;
}

int cmd_evaluate(const ExperimentConfig& cfg, std::ostream& log) {
  const Workload w = build_workload(cfg);
  const int hmax = cfg.eval.mpc.horizon_max;
  ParamVector params;
  if (!cfg.params_path.empty()) {
    std::ifstream in(cfg.params_path);
    if (!in) throw std::runtime_error("cannot open " + cfg.params_path.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw std::runtime_error(cfg.params_path.string() + ": " + e.what());
    }
    const auto flat = j.at("params").get<std::vector<double>>();
    if (flat.size() != w.plan.size() * kParamsPerSegment) {
      throw ConfigError("evaluate.params holds " + std::to_string(flat.size()) + " values but the plan needs " +
                        std::to_string(w.plan.size() * kParamsPerSegment));
    }
    params = ParamVector::from_flat(flat, hmax);
  } else {
    params = initial_params(cfg, w);
  }

  EvaluationConfig ec = cfg.eval;
  ec.record_trace = cfg.write_trace;
  std::vector<EvaluationOutcome> outcomes(cfg.eval_seeds);
  std::vector<std::uint64_t> seeds(cfg.eval_seeds);
  for (std::size_t j = 0; j < seeds.size(); ++j) seeds[j] = derive_seed(cfg.seed, 0x4556414cULL, j);
  parallel_for(seeds.size(), cfg.jobs,
               [&](std::size_t j) { outcomes[j] = rollout(w.ref, w.plan, params, seeds[j], ec); });

  json header = header_json(cfg, "evaluate");
  header["params"] = params.flatten();
  std::string out = header.dump() + "\n";
  std::size_t full = 0;
  for (std::size_t j = 0; j < outcomes.size(); ++j) {
    const auto& o = outcomes[j];
    if (o.all_passed()) ++full;
    json rec{{"iter", j},
             {"accepted", o.all_passed()},
             {"score", score(o.penalized_time)},
             {"completion", o.completion},
             {"time_pen", o.penalized_time},
             {"seed", o.seed},
             {"params", params.flatten()},
             {"raw_time", o.raw_time},
             {"reason", to_string(o.reason)},
             {"passed", o.passed}};
    out += rec.dump() + "\n";
    log << "seed " << o.seed << ": completion " << num_text(o.completion) << "%, time_pen "
        << num_text(o.penalized_time) << " s, " << to_string(o.reason) << '\n';
    if (cfg.write_trace) {
      std::ostringstream csv;
      csv << csv_preamble(cfg, "evaluate") << "t,x,y,z,thrust,wx,wy,wz,segment\n";
      for (const auto& row : o.trace) {
        csv << num_text(row.t) << ',' << num_text(row.position.x()) << ',' << num_text(row.position.y()) << ','
            << num_text(row.position.z()) << ',' << num_text(row.input.thrust) << ','
            << num_text(row.input.rates.x()) << ',' << num_text(row.input.rates.y()) << ','
            << num_text(row.input.rates.z()) << ',' << row.segment << '\n';
      }
      write_atomic(cfg.out_dir / ("trace_" + std::to_string(j) + ".csv"), csv.str());
    }
  }
  write_atomic(cfg.out_dir / "evaluation.jsonl", out);
  log << full << "/" << outcomes.size() << " rollouts completed the track\n";
  return kExitOk;
}

int cmd_segment(const ExperimentConfig& cfg, std::ostream& log) {
  const Workload w = build_workload(cfg);
  const auto acc = reference_accelerations(w.ref);
  std::ostringstream csv;
  csv << csv_preamble(cfg, "segment")
      << "start_s,end_s,class,index,start_tick,end_tick,n_points,slope,dz,mean_v,mean_a\n";
  log << "start_s,end_s,class\n";
  for (std::size_t i = 0; i < w.plan.size(); ++i) {
    const auto& s = w.plan.segments[i];
    const auto f = extract_features(w.ref, s, acc);
    const std::string span = time_text(static_cast<double>(s.start) * w.ref.dt) + ',' +
                             time_text(static_cast<double>(s.end) * w.ref.dt) + ',' + to_string(s.label);
    csv << span << ',' << i << ',' << s.start << ',' << s.end << ',' << num_text(f.n_points) << ','
        << num_text(f.slope) << ',' << num_text(f.dz) << ',' << num_text(f.mean_v) << ','
        << num_text(f.mean_a) << '\n';
    log << span << '\n';
  }
  write_atomic(cfg.out_dir / "segments.csv", csv.str());
  return kExitOk;
}

int cmd_tracks(const ExperimentConfig& cfg, std::ostream& log) {
  const ReferenceTrajectory ref = build_reference(cfg);
  const std::string pre = csv_preamble(cfg, "tracks");
  write_atomic(cfg.out_dir / "reference.csv", pre + reference_csv_text(ref));
  write_atomic(waypoint_csv_path(cfg.out_dir / "reference.csv"), pre + waypoints_csv_text(ref));
  double vmax = 0.0;
  for (const auto& s : ref.samples) vmax = std::max(vmax, s.velocity.norm());
  log << cfg.track_kind << ": " << num_text(ref.duration()) << " s, " << ref.waypoints.size()
      << " waypoints, peak speed " << num_text(vmax) << " m/s\n";
  return kExitOk;
}

int cmd_landscape(const ExperimentConfig& cfg, std::ostream& log) {
  const Workload w = build_workload(cfg);
  const int hmax = cfg.eval.mpc.horizon_max;
  const ParamVector base = initial_params(cfg, w);
  const std::size_t ix = param_index(cfg.landscape_x);
  const std::size_t iy = param_index(cfg.landscape_y);
  if (cfg.landscape_segment >= static_cast<int>(w.plan.size())) {
    throw ConfigError("landscape.segment is out of range");
  }
  const std::size_t nx = cfg.landscape_x_values.size();
  const std::size_t ny = cfg.landscape_y_values.size();
  const std::uint64_t seed = derive_seed(cfg.seed, 0x4c414e44ULL);
  std::vector<EvaluationOutcome> cells(nx * ny);
  parallel_for(cells.size(), cfg.jobs, [&](std::size_t c) {
    ParamVector p = base;
    for (std::size_t s = 0; s < p.segments(); ++s) {
      if (cfg.landscape_segment >= 0 && s != static_cast<std::size_t>(cfg.landscape_segment)) continue;
      auto a = p.per_segment[s].to_array();
      a[ix] = cfg.landscape_x_values[c / ny];
      a[iy] = cfg.landscape_y_values[c % ny];
      p.per_segment[s] = SegmentParams::from_array(a, hmax);
    }
    cells[c] = rollout(w.ref, w.plan, p, seed, cfg.eval);
  });
  std::ostringstream csv;
  csv << csv_preamble(cfg, "landscape") << cfg.landscape_x << ',' << cfg.landscape_y
      << ",completion,time_pen,score\n";
  for (std::size_t c = 0; c < cells.size(); ++c) {
    csv << num_text(cfg.landscape_x_values[c / ny]) << ',' << num_text(cfg.landscape_y_values[c % ny]) << ','
        << num_text(cells[c].completion) << ',' << num_text(cells[c].penalized_time) << ','
        << num_text(score(cells[c].penalized_time)) << '\n';
  }
  write_atomic(cfg.out_dir / "landscape.csv", csv.str());
  log << "landscape: " << cells.size() << " cells written\n";
  return kExitOk;
}

int cmd_ablate_segmentation(const ExperimentConfig& cfg, std::ostream& log) {
  const ReferenceTrajectory ref = build_reference(cfg);
  const std::size_t n_cells = cfg.ablate_grid.size();
  std::vector<Workload> loads(n_cells);
  std::vector<ParamVector> inits(n_cells);
  for (std::size_t c = 0; c < n_cells; ++c) {
    ExperimentConfig cc = cfg;
    cc.segment = true;
    cc.segmentation.height_threshold = cfg.ablate_grid[c].first;
    cc.segmentation.min_duration = cfg.ablate_grid[c].second;
    validate(cc);
    loads[c].ref = ref;
    loads[c].plan = build_plan(cc, ref);
    inits[c] = initial_params(cfg, loads[c]);
  }
  const std::size_t n_runs = n_cells * cfg.ablate_seeds;
  std::vector<SearchResult> runs(n_runs);
  ExperimentConfig inner = cfg;
  inner.jobs = 1;
  parallel_for(n_runs, cfg.jobs, [&](std::size_t i) {
    const std::size_t c = i / cfg.ablate_seeds;
    const std::size_t s = i % cfg.ablate_seeds;
    runs[i] = run_method("autotune", inner, loads[c], inits[c], derive_seed(cfg.seed, 0x4153ULL, s),
                         cfg.ablate_seg_budget);
  });

  std::ostringstream summary, detail;
  summary << csv_preamble(cfg, "ablate-seg")
          << "height_threshold,min_duration,n_segments,runs,successes,mean_best_completion,"
             "min_best_completion,median_evaluations_to_target\n";
  detail << csv_preamble(cfg, "ablate-seg")
         << "height_threshold,min_duration,n_segments,seed_index,target_met,evaluations,"
            "evaluations_to_target,best_completion\n";
  for (std::size_t c = 0; c < n_cells; ++c) {
    const auto [h, d] = cfg.ablate_grid[c];
    double sum = 0.0, mn = 1e300;
    std::size_t ok = 0;
    std::vector<double> to_target;
    for (std::size_t s = 0; s < cfg.ablate_seeds; ++s) {
      const auto& r = runs[c * cfg.ablate_seeds + s];
      sum += r.best_completion;
      mn = std::min(mn, r.best_completion);
      if (r.target_met) ++ok;
      to_target.push_back(static_cast<double>(r.evaluations_to_target.value_or(r.evaluations)));
      detail << num_text(h) << ',' << num_text(d) << ',' << loads[c].plan.size() << ',' << s << ','
             << (r.target_met ? 1 : 0) << ',' << r.evaluations << ','
             << (r.evaluations_to_target ? std::to_string(*r.evaluations_to_target) : "") << ','
             << num_text(r.best_completion) << '\n';
    }
    const double mean = sum / static_cast<double>(cfg.ablate_seeds);
    summary << num_text(h) << ',' << num_text(d) << ',' << loads[c].plan.size() << ',' << cfg.ablate_seeds
            << ',' << ok << ',' << num_text(mean) << ',' << num_text(mn) << ',' << median_text(to_target)
            << '\n';
    log << "height " << num_text(h) << " m, min duration " << num_text(d) << " s: "
        << loads[c].plan.size() << " segments, mean best completion " << num_text(mean) << "%, "
        << ok << "/" << cfg.ablate_seeds << " confirmed\n";
  }
  write_atomic(cfg.out_dir / "ablate_seg.csv", summary.str());
  write_atomic(cfg.out_dir / "ablate_seg_runs.csv", detail.str());
  return kExitOk;
}

int cmd_ablate_components(const ExperimentConfig& cfg, std::ostream& log) {
  const ReferenceTrajectory ref = build_reference(cfg);
  struct Variant {
    std::string name;
    Workload load;
    ParamVector init;
  };
  std::vector<Variant> variants(3);
  variants[0].name = "full";
  variants[1].name = "no-regressor";
  variants[2].name = "no-segmentation";
  ExperimentConfig seg = cfg;
  seg.segment = true;
  ExperimentConfig cold = cfg;
  cold.init = InitKind::Degraded;
  for (auto& v : variants) v.load.ref = ref;
  variants[0].load.plan = build_plan(seg, ref);
  variants[1].load.plan = variants[0].load.plan;
  variants[2].load.plan = single_segment_plan(ref);
  ExperimentConfig warm = cfg;
  warm.init = InitKind::WarmStart;
  bool warning = false;
  variants[0].init = initial_params(warm, variants[0].load, &warning);
  if (warning) log << "warning: warm-start model lacks some segment classes; using defaults there\n";
  variants[1].init = initial_params(cold, variants[1].load);
  variants[2].init = initial_params(cold, variants[2].load);

  const std::size_t n_runs = variants.size() * cfg.ablate_seeds;
  std::vector<SearchResult> runs(n_runs);
  ExperimentConfig inner = cfg;
  inner.jobs = 1;
  parallel_for(n_runs, cfg.jobs, [&](std::size_t i) {
    const auto& v = variants[i / cfg.ablate_seeds];
    runs[i] = run_method("autotune", inner, v.load, v.init,
                         derive_seed(cfg.seed, 0x4143ULL, i % cfg.ablate_seeds), cfg.ablate_comp_budget);
  });

  std::ostringstream summary, detail;
  summary << csv_preamble(cfg, "ablate-comp")
          << "variant,n_segments,runs,successes,median_evaluations_to_target,mean_best_completion\n";
  detail << csv_preamble(cfg, "ablate-comp")
         << "variant,seed_index,target_met,evaluations,evaluations_to_target,best_completion\n";
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    std::vector<double> to_target;
    double sum = 0.0;
    std::size_t ok = 0;
    for (std::size_t s = 0; s < cfg.ablate_seeds; ++s) {
      const auto& r = runs[vi * cfg.ablate_seeds + s];
      // Failed runs count at the budget they used.
      to_target.push_back(static_cast<double>(r.evaluations_to_target.value_or(r.evaluations)));
      sum += r.best_completion;
      if (r.target_met) ++ok;
      detail << variants[vi].name << ',' << s << ',' << (r.target_met ? 1 : 0) << ',' << r.evaluations << ','
             << (r.evaluations_to_target ? std::to_string(*r.evaluations_to_target) : "") << ','
             << num_text(r.best_completion) << '\n';
    }
    const double mean = sum / static_cast<double>(cfg.ablate_seeds);
    summary << variants[vi].name << ',' << variants[vi].load.plan.size() << ',' << cfg.ablate_seeds << ','
            << ok << ',' << median_text(to_target) << ',' << num_text(mean) << '\n';
    log << variants[vi].name << ": median evaluations to target " << median_text(to_target)
        << ", mean best completion " << num_text(mean) << "%, " << ok << "/" << cfg.ablate_seeds
        << " confirmed\n";
  }
  write_atomic(cfg.out_dir / "ablate_comp.csv", summary.str());
  write_atomic(cfg.out_dir / "ablate_comp_runs.csv", detail.str());
  return kExitOk;
}

int cmd_harvest(const ExperimentConfig& cfg, std::ostream& log) {
  TuningDataset data;
  if (!cfg.dataset_path.empty() && fs::exists(cfg.dataset_path)) data = TuningDataset::load_csv(cfg.dataset_path);
  const std::size_t base_rows = data.rows.size();

  std::vector<ExperimentConfig> tracks;
  std::vector<Workload> loads;
  std::vector<ParamVector> inits;
  for (const auto& entry : cfg.harvest_tracks) {
    tracks.push_back(with_track(cfg, entry));
    loads.push_back(build_workload(tracks.back()));
    inits.push_back(initial_params(tracks.back(), loads.back()));
  }
  const std::size_t n_runs = tracks.size() * cfg.harvest_seeds;
  std::vector<SearchResult> runs(n_runs);
  parallel_for(n_runs, cfg.jobs, [&](std::size_t i) {
    const std::size_t t = i / cfg.harvest_seeds;
    ExperimentConfig inner = tracks[t];
    inner.jobs = 1;
    runs[i] = run_method("autotune", inner, loads[t], inits[t],
                         derive_seed(cfg.seed, 0x48ULL, i % cfg.harvest_seeds), cfg.tuner.budget);
  });

  std::ostringstream detail;
  detail << csv_preamble(cfg, "harvest") << "track,seed_index,n_segments,target_met,evaluations\n";
  const int hmax = cfg.eval.mpc.horizon_max;
  for (std::size_t i = 0; i < n_runs; ++i) {
    const std::size_t t = i / cfg.harvest_seeds;
    const auto& r = runs[i];
    detail << cfg.harvest_tracks[t] << ',' << i % cfg.harvest_seeds << ',' << loads[t].plan.size() << ','
           << (r.target_met ? 1 : 0) << ',' << r.evaluations << '\n';
    log << cfg.harvest_tracks[t] << " #" << i % cfg.harvest_seeds << ": "
        << (r.target_met ? "confirmed" : "not confirmed") << " after " << r.evaluations << " evaluations\n";
    if (!r.target_met) continue;
    const ParamVector best = ParamVector::from_flat(r.best, hmax);
    const auto acc = reference_accelerations(loads[t].ref);
    for (std::size_t s = 0; s < loads[t].plan.size(); ++s) {
      const Segment& seg = loads[t].plan.segments[s];
      data.rows.push_back({seg.label, extract_features(loads[t].ref, seg, acc), best.per_segment[s]});
    }
  }
  write_atomic(cfg.out_dir / "harvest_runs.csv", detail.str());
  write_atomic(cfg.out_dir / "dataset.csv", csv_preamble(cfg, "harvest") + data.to_csv());
  log << data.rows.size() - base_rows << " new rows, " << data.rows.size() << " total\n";
  if (data.rows.empty()) return kExitTargetNotMet;
  json model = WarmStartModel::train(data, cfg.gbrt, {}, cfg.jobs).to_json();
  model["autotune_version"] = kVersion;
  model["config"] = config_json(cfg);
  write_atomic(cfg.out_dir / "warmstart_model.json", model.dump(1) + "\n");
  return data.rows.size() > base_rows ? kExitOk : kExitTargetNotMet;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"tune",        "baseline",  "evaluate", "segment", "ablate-seg",
                                              "ablate-comp", "landscape", "harvest",  "tracks"};
  return names;
}

int run_command(const std::string& name, const ExperimentConfig& cfg, std::ostream& log,
                std::ostream& err) {
  static const std::map<std::string, int (*)(const ExperimentConfig&, std::ostream&)> table{
      {"tune", cmd_tune},
      {"baseline", cmd_baseline},
      {"evaluate", cmd_evaluate},
      {"segment", cmd_segment},
      {"ablate-seg", cmd_ablate_segmentation},
      {"ablate-comp", cmd_ablate_components},
      {"landscape", cmd_landscape},
      {"harvest", cmd_harvest},
      {"tracks", cmd_tracks}};
  const auto it = table.find(name);
  if (it == table.end()) {
    err << "error: unknown command '" << name << "'\n";
    return kExitConfig;
  }
  try {
    fs::create_directories(cfg.out_dir);
    return it->second(cfg, log);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace autotune
