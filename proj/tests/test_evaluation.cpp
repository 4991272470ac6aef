#include <cmath>
#include <random>
#include <vector>

#include "autotune/evaluation.hpp"
#include "doctest.h"

using namespace autotune;

namespace {

struct Rigid {
  Quat q;
  Vec3 t;
  Vec3 operator()(const Vec3& p) const { return q * p + t; }
};

ReferenceTrajectory transformed(const ReferenceTrajectory& ref, const Rigid& g) {
  ReferenceTrajectory out = ref;
  for (auto& s : out.samples) {
    s.position = g(s.position);
    s.velocity = g.q * s.velocity;
    s.attitude = (g.q * s.attitude).normalized();
  }
  for (auto& w : out.waypoints) w = g(w);
  return out;
}

const ReferenceTrajectory& slow_circle() {
  static const ReferenceTrajectory ref = make_circle_track(16.0, 12, 5.0, 0.005);
  return ref;
}

ParamVector good_params() { return ParamVector::uniform(1, {100, 100, 10, 10, 20}); }

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("pass test is a strict radius check at the nearest tick") {
  const std::vector<Vec3> trace{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
  CHECK(waypoint_passed(trace, 0.005, Vec3(1, 0, 0), 0.005, 1.3));
  CHECK_FALSE(waypoint_passed(trace, 0.005, Vec3(1, 1.3, 0), 0.005, 1.3));
  CHECK(waypoint_passed(trace, 0.005, Vec3(1, 1.29, 0), 0.005, 1.3));
  // Only the nearest tick counts without a window.
  CHECK_FALSE(waypoint_passed(trace, 0.005, Vec3(2, 0, 0), 0.0, 1.3));
  CHECK(waypoint_passed(trace, 0.005, Vec3(2, 0, 0), 0.0, 1.3, 0.01));
}

TEST_CASE("completion percentage") {
  std::vector<bool> passed(12, true);
  CHECK(trajectory_completion(passed) == 100.0);
  for (int i = 9; i < 12; ++i) passed[static_cast<std::size_t>(i)] = false;
  CHECK(trajectory_completion(passed) == 75.0);
  CHECK(trajectory_completion(std::vector<bool>(12, false)) == 0.0);
  CHECK_THROWS(trajectory_completion({}));
}

TEST_CASE("penalized time adds the remaining polyline") {
  const std::vector<Vec3> wps{Vec3(0, 0, 0), Vec3(3, 0, 0)};
  CHECK(penalized_time(10.0, Vec3(9, 9, 9), wps, {true, true}) == 10.0);
  CHECK(penalized_time(10.0, Vec3(0, 0, 0), wps, {true, false}) == doctest::Approx(13.0));

  // Stop point, then waypoints 3 m and a further 5 m away.
  const Vec3 stop(0, 0, 0);
  const std::vector<Vec3> legs{Vec3(3, 0, 0), Vec3(0, 4, 0)};
  CHECK(penalized_time(2.0, stop, legs, {false, false}) == doctest::Approx(2.0 + 3.0 + 5.0));
  CHECK(penalized_time(2.0, stop, legs, {false, false}, 2.0) == doctest::Approx(2.0 + 4.0));
}

TEST_CASE("penalty counts waypoints after the last passed one") {
  const std::vector<Vec3> wps{Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(4, 0, 0)};
  CHECK(penalized_time(1.0, Vec3(1, 0, 0), wps, {true, false, false}) == doctest::Approx(4.0));
}

TEST_CASE("score") {
  CHECK(score(0.0) == 1.0);
  CHECK(score(4.0) == doctest::Approx(0.0183156).epsilon(1e-6));
  CHECK(score(4.0) == std::exp(-4.0));
  CHECK_THROWS(score(-1.0));
  double prev = 2.0;
  for (double t = 0.0; t < 200.0; t += 0.37) {
    CHECK(score(t) < prev);
    prev = score(t);
  }
}

TEST_CASE("well-tuned slow circle completes without penalty") {
  const auto& ref = slow_circle();
  const auto out = rollout(ref, single_segment_plan(ref), good_params(), 1, EvaluationConfig{});
  CHECK(out.completion == 100.0);
  CHECK(out.all_passed());
  CHECK(out.reason == StopReason::Finished);
  CHECK(out.penalized_time == out.raw_time);
  CHECK(out.raw_time == doctest::Approx(ref.duration()).epsilon(0.01));
  CHECK(out.seed == 1);
}

TEST_CASE("zero weights diverge and stop early") {
  const auto& ref = slow_circle();
  const auto out = rollout(ref, single_segment_plan(ref), ParamVector::uniform(1, {0, 0, 0, 0, 20}), 1,
                           EvaluationConfig{});
  CHECK(out.completion < 100.0);
  CHECK(out.raw_time < ref.duration());
  CHECK(out.penalized_time > out.raw_time);
}

TEST_CASE("rollouts are deterministic per seed") {
  const auto ref = make_drop_track(TrackSpec{}, 0.005);
  const auto plan = segment_trajectory(ref);
  const auto w = ParamVector::uniform(plan.size(), SegmentParams{});
  EvaluationConfig cfg;
  cfg.record_trace = true;
  const auto a = rollout(ref, plan, w, 42, cfg);
  const auto b = rollout(ref, plan, w, 42, cfg);
  CHECK(a.passed == b.passed);
  CHECK(a.raw_time == b.raw_time);
  CHECK(a.penalized_time == b.penalized_time);
  CHECK(a.stop_position == b.stop_position);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].position == b.trace[i].position);
  const auto c = rollout(ref, plan, w, 43, cfg);
  CHECK(c.trace.back().position != a.trace.back().position);
}

TEST_CASE("trace rows carry the active segment") {
  const auto ref = make_drop_track(TrackSpec{}, 0.005);
  const auto plan = segment_trajectory(ref);
  EvaluationConfig cfg;
  cfg.record_trace = true;
  const auto out = rollout(ref, plan, ParamVector::uniform(plan.size(), SegmentParams{}), 1, cfg);
  REQUIRE(out.all_passed());
  std::size_t prev = 0;
  for (const auto& row : out.trace) {
    CHECK(row.segment >= prev);
    prev = row.segment;
  }
  CHECK(prev == plan.size() - 1);
}

TEST_CASE("mismatched parameter vector is rejected") {
  const auto& ref = slow_circle();
  CHECK_THROWS(rollout(ref, single_segment_plan(ref), ParamVector::uniform(2, SegmentParams{}), 1, {}));
}

TEST_CASE("property: outcome invariants over random parameters") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> weight(0.0, 200.0);
  std::uniform_int_distribution<int> horizon(1, 40);
  const auto ref = make_circle_track(16.0, 12, 8.0, 0.005);
  const auto plan = single_segment_plan(ref);
  for (int i = 0; i < 12; ++i) {
    const auto w = ParamVector::uniform(1, {weight(rng), weight(rng), weight(rng), weight(rng), horizon(rng)});
    const auto out = rollout(ref, plan, w, rng(), EvaluationConfig{});
    CHECK(out.completion >= 0.0);
    CHECK(out.completion <= 100.0);
    CHECK(out.penalized_time >= out.raw_time);
    CHECK((out.completion == 100.0) == out.all_passed());
    CHECK((out.penalized_time == out.raw_time) == (out.all_passed() && out.reason == StopReason::Finished));
  }
}

TEST_CASE("property: stopping early never beats finishing") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-20.0, 20.0), t(0.0, 30.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Vec3> wps;
    for (int i = 0; i < 6; ++i) wps.emplace_back(u(rng), u(rng), u(rng));
    std::vector<bool> passed(6, false);
    const std::size_t k = rng() % 6;
    for (std::size_t i = 0; i < k; ++i) passed[i] = true;
    const double raw = t(rng);
    const double early = penalized_time(raw, Vec3(u(rng), u(rng), u(rng)), wps, passed);
    CHECK(early >= raw);
    CHECK(score(early) <= score(raw));
  }
}

TEST_CASE("property: metrics are invariant under rigid motion") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> trace;
  for (int i = 0; i < 200; ++i) trace.emplace_back(0.05 * i, std::sin(0.05 * i), 1.0);
  const std::vector<Vec3> wps{Vec3(2.0, std::sin(2.0) + 0.5, 1.0), Vec3(5.0, 3.0, 1.0), Vec3(9.0, 0.0, 2.0)};
  const std::vector<double> times{0.2, 0.5, 0.9};
  for (int trial = 0; trial < 50; ++trial) {
    const Rigid g{Quat(u(rng), u(rng), u(rng), u(rng)).normalized(), Vec3(u(rng), u(rng), u(rng)) * 100.0};
    std::vector<Vec3> moved;
    for (const auto& p : trace) moved.push_back(g(p));
    std::vector<bool> a, b;
    std::vector<Vec3> wmoved;
    for (std::size_t i = 0; i < wps.size(); ++i) {
      a.push_back(waypoint_passed(trace, 0.005, wps[i], times[i], 1.3));
      b.push_back(waypoint_passed(moved, 0.005, g(wps[i]), times[i], 1.3));
      wmoved.push_back(g(wps[i]));
    }
    CHECK(a == b);
    CHECK(trajectory_completion(a) == trajectory_completion(b));
    CHECK(penalized_time(1.0, trace[50], wps, a) ==
          doctest::Approx(penalized_time(1.0, moved[50], wmoved, b)).epsilon(1e-12));
  }
}

TEST_CASE("closed-loop completion is invariant under a yaw-and-shift of the track") {
  const auto& ref = slow_circle();
  const Rigid g{yaw_quat(0.9), Vec3(40.0, -25.0, 3.0)};
  const auto moved = transformed(ref, g);
  const auto a = rollout(ref, single_segment_plan(ref), good_params(), 5, {});
  const auto b = rollout(moved, single_segment_plan(moved), good_params(), 5, {});
  CHECK(a.completion == b.completion);
  CHECK(a.raw_time == doctest::Approx(b.raw_time));
}

}
