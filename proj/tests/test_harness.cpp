#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "autotune/harness.hpp"
#include "doctest.h"

using namespace autotune;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("autotune_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> data_rows(const fs::path& csv) {
  std::vector<std::string> out;
  for (const auto& l : lines(slurp(csv))) {
    if (!l.empty() && l[0] != '#') out.push_back(l);
  }
  if (!out.empty()) out.erase(out.begin());  // header
  return out;
}

// Short circle so each rollout stays cheap.
ExperimentConfig quick(const fs::path& out, std::vector<std::string> extra = {}) {
  std::vector<std::string> o{"track.kind=circle", "track.speed=8", "tuner.budget=12", "out=" + out.string()};
  o.insert(o.end(), extra.begin(), extra.end());
  return load_experiment({}, o);
}

int run(const std::string& cmd, const ExperimentConfig& cfg) {
  std::ostringstream log, err;
  return run_command(cmd, cfg, log, err);
}

std::set<fs::path> listing(const fs::path& dir) {
  std::set<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) out.insert(fs::relative(e.path(), dir));
  return out;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("key-value parsing") {
  const auto kv = KeyValueConfig::parse("# comment\ntuner.sigma = 4.5  # trailing\n\nmethod=pso\ntrack.leg_speeds = 1, 2,3\n");
  CHECK(kv.get_double("tuner.sigma", 0.0) == 4.5);
  CHECK(kv.get_string("method", "") == "pso");
  CHECK(kv.get_doubles("track.leg_speeds", {}) == std::vector<double>{1, 2, 3});
  CHECK(kv.get_int("tuner.budget", 200) == 200);
  CHECK_THROWS_AS(KeyValueConfig::parse("just words\n"), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse("x = 1\n").get_double("x", 0) + KeyValueConfig::parse("y = abc").get_double("y", 0),
                  ConfigError);
  try {
    KeyValueConfig::parse("a = 1\n= 2\n", "cfg.txt");
    FAIL("expected an error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("cfg.txt:2") != std::string::npos);
  }
}

TEST_CASE("bool and list values") {
  const auto kv = KeyValueConfig::parse("a = true\nb = no\nc = maybe\nd = x, y\n");
  CHECK(kv.get_bool("a", false));
  CHECK_FALSE(kv.get_bool("b", true));
  CHECK_THROWS_AS(kv.get_bool("c", true), ConfigError);
  CHECK(kv.get_strings("d", {}) == std::vector<std::string>{"x", "y"});
}

TEST_CASE("experiment defaults and overrides") {
  const auto dir = fresh_dir("cfg");
  std::ofstream(dir / "exp.cfg") << "tuner.sigma = 3\nseed = 9\nsegmentation.height_threshold = 2\n";
  const auto cfg = load_experiment(dir / "exp.cfg", {"seed=11", "mpc.horizon_max=30"});
  CHECK(cfg.tuner.sigma == 3.0);
  CHECK(cfg.seed == 11);
  CHECK(cfg.segmentation.height_threshold == 2.0);
  CHECK(cfg.eval.mpc.horizon_max == 30);
  CHECK(cfg.tuner.horizon_max == 30);
  CHECK(cfg.eval.pass_radius == 1.3);
  CHECK(cfg.tuner.budget == 200);
  CHECK(cfg.track_kind == "drop");
}

TEST_CASE("unknown keys and bad values are config errors") {
  CHECK_THROWS_AS(load_experiment({}, {"tuner.sigmaa=3"}), ConfigError);
  CHECK_THROWS_AS(load_experiment({}, {"tuner.sigma=-1"}), ConfigError);
  CHECK_THROWS_AS(load_experiment({}, {"track.kind=triangle"}), ConfigError);
  CHECK_THROWS_AS(load_experiment({}, {"method=annealing"}), ConfigError);
  CHECK_THROWS_AS(load_experiment({}, {"not an assignment"}), ConfigError);
  CHECK_THROWS_AS(load_experiment("/nonexistent/exp.cfg", {}), ConfigError);
}

TEST_CASE("thrust-to-weight key sets the thrust cap") {
  const auto cfg = load_experiment({}, {"vehicle.twr=4.179"});
  CHECK(cfg.eval.vehicle.thrust_max == doctest::Approx(4.179 * 9.81));
  CHECK_THROWS_AS(load_experiment({}, {"vehicle.twr=3", "vehicle.thrust_max=20"}), ConfigError);
}

TEST_CASE("resolved config round trips through its text form") {
  const auto a = load_experiment({}, {"track.kind=circle", "tuner.sigma=2.5", "ablate.grid=1:2, 5:3", "seed=4"});
  const auto dir = fresh_dir("roundtrip");
  std::ofstream(dir / "resolved.cfg") << a.to_text();
  const auto b = load_experiment(dir / "resolved.cfg");
  CHECK(a.resolved() == b.resolved());
  CHECK(b.ablate_grid == std::vector<std::pair<double, double>>{{1, 2}, {5, 3}});
  CHECK(a.resolved().count("out") == 0);
  CHECK(a.resolved().count("jobs") == 0);
}

TEST_CASE("segment command writes the plan") {
  const auto dir = fresh_dir("segment");
  std::ostringstream log, err;
  const auto cfg = load_experiment({}, {"out=" + dir.string()});
  CHECK(run_command("segment", cfg, log, err) == kExitOk);
  const auto out = lines(log.str());
  REQUIRE(out.size() >= 2);
  CHECK(out[0] == "start_s,end_s,class");
  CHECK(out[1].rfind("0,", 0) == 0);
  const auto rows = data_rows(dir / "segments.csv");
  CHECK(rows.size() == out.size() - 1);
}

TEST_CASE("landscape on a 2x2 grid has four rows") {
  const auto dir = fresh_dir("landscape");
  const auto cfg = quick(dir, {"landscape.x_values=5, 50", "landscape.y_values=1, 10"});
  CHECK(run("landscape", cfg) == kExitOk);
  const auto rows = data_rows(dir / "landscape.csv");
  CHECK(rows.size() == 4);
}

TEST_CASE("tune output is byte-identical across runs") {
  const auto a = fresh_dir("tune_a"), b = fresh_dir("tune_b");
  const int ca = run("tune", quick(a, {"seed=3"}));
  const int cb = run("tune", quick(b, {"seed=3", "jobs=2"}));
  CHECK(ca == cb);
  CHECK((ca == kExitOk || ca == kExitTargetNotMet));
  CHECK(slurp(a / "history.jsonl") == slurp(b / "history.jsonl"));
  CHECK(slurp(a / "best_params.json") == slurp(b / "best_params.json"));
  CHECK_FALSE(slurp(a / "history.jsonl").empty());
}

TEST_CASE("history records carry the published fields") {
  const auto dir = fresh_dir("schema");
  run("tune", quick(dir, {"seed=1"}));
  const auto ls = lines(slurp(dir / "history.jsonl"));
  REQUIRE(ls.size() >= 2);
  const auto header = nlohmann::json::parse(ls[0]);
  CHECK(header.at("type") == "header");
  CHECK(header.at("version") == kVersion);
  CHECK(header.at("config").is_object());
  CHECK(header.at("config").at("track.kind") == "circle");
  for (std::size_t i = 1; i < ls.size(); ++i) {
    const auto rec = nlohmann::json::parse(ls[i]);
    for (const char* key : {"iter", "accepted", "score", "completion", "time_pen", "seed", "params"}) {
      CHECK(rec.contains(key));
    }
    CHECK(rec.at("params").is_array());
    CHECK(rec.at("iter").get<std::size_t>() == i - 1);
  }
}

TEST_CASE("budget exhaustion without the target exits with 3") {
  const auto dir = fresh_dir("unmet");
  CHECK(run("tune", quick(dir, {"tuner.budget=1"})) == kExitTargetNotMet);
  CHECK(lines(slurp(dir / "history.jsonl")).size() == 2);
}

TEST_CASE("run_command maps errors to exit codes") {
  const auto dir = fresh_dir("codes");
  CHECK(run("fly", quick(dir)) == kExitConfig);
  CHECK(run("evaluate", quick(dir, {"evaluate.params=" + (dir / "missing.json").string()})) != kExitOk);
  auto cfg = quick(dir);
  cfg.track_kind = "csv";
  cfg.track_path = dir / "absent.csv";
  CHECK(run("segment", cfg) == kExitError);
  CHECK_THROWS_AS(quick(dir, {"init.kind=explicit", "init.params=1, 2, 3"}), ConfigError);
}

TEST_CASE("baseline and evaluate reproduce byte for byte") {
  const auto a = fresh_dir("base_a"), b = fresh_dir("base_b"), shared = fresh_dir("base_params");
  for (const auto& d : {a, b}) run("baseline", quick(d, {"method=random", "seed=5"}));
  CHECK(slurp(a / "history.jsonl") == slurp(b / "history.jsonl"));

  // Identical configs apart from the output directory, which is not embedded.
  fs::copy_file(a / "best_params.json", shared / "best_params.json");
  const std::string params = "evaluate.params=" + (shared / "best_params.json").string();
  for (const auto& d : {a, b}) run("evaluate", quick(d, {params, "evaluate.trace=true", "seed=5"}));
  CHECK(slurp(a / "evaluation.jsonl") == slurp(b / "evaluation.jsonl"));
  CHECK(slurp(a / "trace_0.csv") == slurp(b / "trace_0.csv"));
  const auto trace = data_rows(a / "trace_0.csv");
  CHECK(trace.size() > 100);
}

TEST_CASE("outputs stay inside the output directory") {
  const auto root = fresh_dir("confined");
  const auto out = root / "out";
  const auto before = listing(root);
  run("tracks", quick(out));
  run("segment", quick(out));
  run("tune", quick(out, {"tuner.budget=3"}));
  for (const auto& p : listing(root)) {
    if (before.count(p)) continue;
    CHECK(p.begin()->string() == "out");
  }
  for (const auto& e : fs::directory_iterator(out)) CHECK(e.path().extension() != ".tmp");
  CHECK(fs::exists(out / "reference.csv"));
  CHECK(fs::exists(out / "reference_waypoints.csv"));
}

TEST_CASE("exported tracks load back as csv references") {
  const auto dir = fresh_dir("tracks");
  REQUIRE(run("tracks", quick(dir)) == kExitOk);
  auto cfg = quick(dir);
  const auto original = build_reference(cfg);
  cfg.track_kind = "csv";
  cfg.track_path = dir / "reference.csv";
  const auto back = build_reference(cfg);
  REQUIRE(back.size() == original.size());
  CHECK((back.samples.back().position - original.samples.back().position).norm() < 1e-12);
  CHECK(back.waypoints.size() == original.waypoints.size());
}

TEST_CASE("every csv output embeds the config and version") {
  const auto dir = fresh_dir("preamble");
  run("segment", quick(dir));
  const auto text = slurp(dir / "segments.csv");
  CHECK(text.rfind(std::string("# autotune ") + kVersion, 0) == 0);
  CHECK(text.find("# track.kind = circle") != std::string::npos);
}

TEST_CASE("segmentation ablation collapses the coarse cell") {
  const auto dir = fresh_dir("ablate_seg");
  auto cfg = load_experiment({}, {"ablate.seeds=2", "ablate.seg_budget=15", "out=" + dir.string()});
  REQUIRE(run("ablate-seg", cfg) == kExitOk);
  const auto rows = data_rows(dir / "ablate_seg.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].rfind("30,2,1,", 0) == 0);
  CHECK(rows[0].rfind("1,2,4,", 0) == 0);
  CHECK(data_rows(dir / "ablate_seg_runs.csv").size() == 4);
}

TEST_CASE("command list matches the interface") {
  const std::set<std::string> names(command_names().begin(), command_names().end());
  CHECK(names == std::set<std::string>{"tune", "baseline", "evaluate", "segment", "ablate-seg", "ablate-comp",
                                       "landscape", "harvest", "tracks"});
}

}
