#include <cmath>
#include <random>
#include <vector>

#include "autotune/tuner.hpp"
#include "doctest.h"

using namespace autotune;

namespace {

// "Time" is the L1 distance to a target vector; completion is fixed.
class DistanceObjective final : public Objective {
 public:
  DistanceObjective(std::vector<double> target, double completion = 0.0, std::vector<std::size_t> axes = {})
      : target_(std::move(target)), completion_(completion), axes_(std::move(axes)) {}

  Evaluation evaluate(const ParamVector& w, std::uint64_t seed) const override {
    const auto x = w.flatten();
    double d = 0.0;
    if (axes_.empty()) {
      for (std::size_t i = 0; i < x.size(); ++i) d += std::abs(x[i] - target_[i]);
    } else {
      for (std::size_t i : axes_) d += std::abs(x[i] - target_[i]);
    }
    return {score(d), completion_, d, seed};
  }

 private:
  std::vector<double> target_;
  double completion_;
  std::vector<std::size_t> axes_;
};

// Completes only when q_pos_xy of segment 0 is below a threshold.
class ThresholdObjective final : public Objective {
 public:
  Evaluation evaluate(const ParamVector& w, std::uint64_t seed) const override {
    const double q = w.per_segment[0].q_pos_xy;
    return {score(q), q < 20.0 ? 100.0 : 50.0, q, seed};
  }
};

double sample_std(const std::vector<double>& xs) {
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return std::sqrt(v / static_cast<double>(xs.size() - 1));
}

TunerConfig no_stop(std::size_t budget, std::uint64_t seed) {
  TunerConfig c;
  c.budget = budget;
  c.seed = seed;
  c.stop.enabled = false;
  return c;
}

}  // namespace

TEST_SUITE("tuner") {

TEST_CASE("zero sigma proposes the current point") {
  TunerConfig cfg;
  cfg.sigma = 0.0;
  std::mt19937_64 rng(1);
  const ParamVector w{{{10, 20, 3, 4, 12}, {1, 2, 3, 4, 5}}};
  CHECK(propose(w, cfg, 1, rng) == w);
  cfg.sigma = 5.0;
  CHECK(propose(w, cfg, 1, rng) != w);
}

TEST_CASE("proposal stds follow the active segment") {
  TunerConfig cfg;
  std::mt19937_64 rng(2024);
  // Large weights keep every draw away from the zero clamp.
  const auto w = ParamVector::uniform(3, {1000, 1000, 1000, 1000, 20});
  std::vector<double> seg0, seg2;
  for (int i = 0; i < 100000; ++i) {
    const auto p = propose(w, cfg, 2, rng);
    seg0.push_back(p.per_segment[0].q_pos_xy - 1000.0);
    seg2.push_back(p.per_segment[2].q_velocity - 1000.0);
  }
  CHECK(sample_std(seg0) == doctest::Approx(5.0 * std::sqrt(0.75)).epsilon(0.02));
  CHECK(sample_std(seg2) == doctest::Approx(5.0).epsilon(0.02));

  // With one segment nothing precedes the active one.
  std::vector<double> single;
  const auto one = ParamVector::uniform(1, {1000, 1000, 1000, 1000, 20});
  for (int i = 0; i < 100000; ++i) single.push_back(propose(one, cfg, 0, rng).per_segment[0].q_pos_z - 1000.0);
  CHECK(sample_std(single) == doctest::Approx(5.0).epsilon(0.02));
}

TEST_CASE("proposals stay inside the parameter box") {
  TunerConfig cfg;
  cfg.sigma = 50.0;
  std::mt19937_64 rng(3);
  const auto w = ParamVector::uniform(2, {1, 1, 1, 1, 2});
  for (int i = 0; i < 2000; ++i) CHECK(propose(w, cfg, 0, rng).valid(cfg.horizon_max));
}

TEST_CASE("acceptance probability is the score ratio") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    CHECK(accept(0.5, 0.4, rng));
    CHECK(accept(0.3, 0.3, rng));
    CHECK(accept(1e-9, 0.0, rng));
  }
  int hits = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) hits += accept(0.1, 0.4, rng);
  CHECK(static_cast<double>(hits) / n == doctest::Approx(0.25).epsilon(0.04));
  CHECK(std::abs(static_cast<double>(hits) / n - 0.25) < 0.01);
}

TEST_CASE("chain visits a discrete space in proportion to the scores") {
  const double scores[3] = {1.0, 0.5, 0.25};
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> other(1, 2);
  std::vector<double> visits(3, 0.0);
  int state = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const int next = (state + other(rng)) % 3;
    if (accept(scores[next], scores[state], rng)) state = next;
    visits[static_cast<std::size_t>(state)] += 1.0;
  }
  double tv = 0.0;
  for (int k = 0; k < 3; ++k) tv += std::abs(visits[static_cast<std::size_t>(k)] / n - scores[k] / 1.75);
  CHECK(0.5 * tv < 0.02);
}

TEST_CASE("initial point that meets the target stops immediately") {
  DistanceObjective always(std::vector<double>(5, 0.0), 100.0);
  TunerConfig cfg;
  cfg.seed = 4;
  const auto w0 = ParamVector::uniform(1, {5, 5, 5, 5, 5});
  const auto r = tune(always, w0, cfg);
  CHECK(r.target_met());
  CHECK(r.best == w0);
  CHECK(r.search.evaluations <= 5);
  REQUIRE(r.search.evaluations_to_target.has_value());
  CHECK(*r.search.evaluations_to_target == 5);
  std::size_t reevals = 0;
  for (const auto& rec : r.search.history) reevals += rec.reeval;
  CHECK(reevals == 4);
}

TEST_CASE("budget of one returns the initial point unmet") {
  ThresholdObjective obj;
  TunerConfig cfg;
  cfg.budget = 1;
  const auto w0 = ParamVector::uniform(1, {50, 5, 5, 5, 5});
  const auto r = tune(obj, w0, cfg);
  CHECK_FALSE(r.target_met());
  CHECK(r.best == w0);
  CHECK(r.search.evaluations == 1);
  CHECK(r.search.history.size() == 1);
}

TEST_CASE("tuning stops once a sample survives its re-evaluations") {
  ThresholdObjective obj;
  TunerConfig cfg;
  cfg.seed = 9;
  cfg.sigma = 20.0;
  const auto r = tune(obj, ParamVector::uniform(1, {40, 5, 5, 5, 5}), cfg);
  REQUIRE(r.target_met());
  CHECK(r.best.per_segment[0].q_pos_xy < 20.0);
  CHECK(r.search.history.size() == r.search.evaluations);
  CHECK(r.search.history.size() <= cfg.budget);
  CHECK(r.search.history.back().reeval);
}

TEST_CASE("two-segment toy reaches the optimum") {
  // One continuous coordinate per segment: q_pos_xy of segments 0 and 1.
  std::vector<double> target(10, 0.0);
  target[0] = 30.0;
  target[5] = 70.0;
  DistanceObjective toy(target, 0.0, {0, 5});
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = tune(toy, ParamVector::uniform(2, SegmentParams{}), no_stop(500, seed));
    hits += r.search.best_eval.penalized_time < 1.0;
  }
  CHECK(hits >= 9);
}

TEST_CASE("full ten-dimensional toy improves on the start") {
  // All ten coordinates count. The chain's stationary density in L1 distance
  // peaks near d = 81, so the best sample stays well above 1.
  const std::vector<double> target{50, 50, 5, 10, 20, 50, 50, 5, 10, 20};
  DistanceObjective toy(target);
  const auto w0 = ParamVector::uniform(2, {40, 60, 10, 5, 15});
  const double d0 = toy.evaluate(w0, 0).penalized_time;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = tune(toy, w0, no_stop(500, seed));
    CHECK(r.search.best_eval.penalized_time < d0);
    CHECK(r.search.history.size() == 500);
  }
}

TEST_CASE("property: best score never decreases and matches the history") {
  std::vector<double> target(10, 3.0);
  DistanceObjective toy(target);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = tune(toy, ParamVector::uniform(2, {20, 20, 20, 20, 20}), no_stop(150, seed));
    double running = 0.0, best = 0.0;
    for (const auto& rec : r.search.history) {
      best = std::max(best, rec.score);
      CHECK(best >= running);
      running = best;
    }
    CHECK(r.search.best_eval.score == best);
  }
}

TEST_CASE("property: strictly better proposals are always accepted") {
  std::vector<double> target(5, 0.0);
  DistanceObjective toy(target);
  const auto r = tune(toy, ParamVector::uniform(1, {30, 30, 30, 30, 30}), no_stop(300, 6));
  double head = -1.0;
  for (const auto& rec : r.search.history) {
    if (head >= 0.0 && rec.score > head) CHECK(rec.accepted);
    if (rec.accepted) head = rec.score;
  }
}

TEST_CASE("property: identical configs give identical histories") {
  std::vector<double> target(15, 2.0);
  DistanceObjective toy(target);
  TunerConfig cfg = no_stop(120, 31);
  cfg.segment_sweep = {2, 0, 1};
  const auto w0 = ParamVector::uniform(3, SegmentParams{});
  const auto a = tune(toy, w0, cfg);
  const auto b = tune(toy, w0, cfg);
  REQUIRE(a.search.history.size() == b.search.history.size());
  for (std::size_t i = 0; i < a.search.history.size(); ++i) {
    CHECK(a.search.history[i].params == b.search.history[i].params);
    CHECK(a.search.history[i].seed == b.search.history[i].seed);
    CHECK(a.search.history[i].accepted == b.search.history[i].accepted);
    CHECK(a.search.history[i].active_segment == b.search.history[i].active_segment);
  }
  cfg.seed = 32;
  CHECK(tune(toy, w0, cfg).search.history[1].params != a.search.history[1].params);
}

TEST_CASE("active segment follows the sweep and advances on acceptance") {
  std::vector<double> target(15, 0.0);
  DistanceObjective toy(target);
  TunerConfig cfg = no_stop(200, 2);
  cfg.segment_sweep = {2, 0, 1};
  const auto r = tune(toy, ParamVector::uniform(3, {20, 20, 20, 20, 20}), cfg);
  const std::vector<int> order{2, 0, 1};
  std::size_t pos = 0;
  for (std::size_t i = 1; i < r.search.history.size(); ++i) {
    const auto& rec = r.search.history[i];
    CHECK(rec.active_segment == order[pos % 3]);
    if (rec.accepted) ++pos;
  }
  CHECK(pos > 3);
}

TEST_CASE("invalid tuner configs are rejected") {
  TunerConfig c;
  c.sigma = -1.0;
  CHECK_THROWS(c.validate());
  c = {};
  c.shrink = 0.0;
  CHECK_THROWS(c.validate());
  c = {};
  c.shrink = 1.5;
  CHECK_THROWS(c.validate());
  c = {};
  c.budget = 0;
  CHECK_THROWS(c.validate());
  c = {};
  c.segment_sweep = {0, 3};
  DistanceObjective toy(std::vector<double>(10, 0.0));
  CHECK_THROWS(tune(toy, ParamVector::uniform(2, SegmentParams{}), c));
}

TEST_CASE("seed derivation is deterministic and spreads") {
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  CHECK(derive_seed(1, 2, 3) != derive_seed(1, 2, 4));
  CHECK(derive_seed(1, 2, 3) != derive_seed(2, 2, 3));
  CHECK(derive_seed(0, 0, 0) != 0);
}

TEST_CASE("ledger caps evaluations at the budget") {
  int calls = 0;
  SearchLedger ledger([&](const std::vector<double>&, std::uint64_t s) {
    ++calls;
    return Evaluation{0.5, 0.0, 1.0, s};
  }, 3, StopRule{}, 1);
  const auto evals = ledger.evaluate_batch({{1}, {2}, {3}, {4}, {5}});
  CHECK(evals.size() == 3);
  CHECK(calls == 3);
  CHECK(ledger.exhausted());
  const auto res = ledger.finish();
  CHECK(res.evaluations == 3);
  CHECK_FALSE(res.target_met);
}

TEST_CASE("parallel_for covers every index once") {
  std::vector<int> hit(1000, 0);
  parallel_for(hit.size(), 4, [&](std::size_t i) { hit[i] += 1; });
  for (int h : hit) CHECK(h == 1);
}

}
