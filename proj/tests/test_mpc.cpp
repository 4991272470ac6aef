#include <cmath>
#include <random>

#include "autotune/evaluation.hpp"
#include "autotune/mpc.hpp"
#include "doctest.h"

using namespace autotune;

namespace {

ReferenceSample as_reference(const QuadState& s) { return {s.position, s.attitude, s.velocity}; }

ReferenceWindow hover_window(const Vec3& p, int horizon, const VehicleParams& vp) {
  ReferenceWindow w;
  w.states.assign(static_cast<std::size_t>(horizon) + 1, ReferenceSample{p, Quat::Identity(), Vec3::Zero()});
  w.inputs.assign(static_cast<std::size_t>(horizon), ControlInput{vp.hover_thrust(), Vec3::Zero()});
  return w;
}

QuadState random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  QuadState s;
  s.position = Vec3(u(rng), u(rng), u(rng)) * 10.0;
  s.velocity = Vec3(u(rng), u(rng), u(rng)) * 8.0;
  s.attitude = Quat(u(rng), u(rng), u(rng), u(rng)).normalized();
  return s;
}

ControlInput random_input(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> t(0.0, 20.0), r(-1.0, 1.0);
  return {t(rng), Vec3(10.0 * r(rng), 10.0 * r(rng), 3.0 * r(rng))};
}

double max_rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& fd) {
  return (a - fd).cwiseAbs().maxCoeff() / std::max(fd.cwiseAbs().maxCoeff(), 1e-12);
}

struct FdJacobians {
  StateMat A;
  InputMat B;
};

FdJacobians finite_difference(const QuadState& s, const ControlInput& u, double dt, const VehicleParams& vp) {
  const double h = 1e-6;
  FdJacobians out;
  const ReferenceSample nominal = as_reference(model_step(s, u, dt, vp));
  for (int i = 0; i < kErrorDim; ++i) {
    ErrorVec d = ErrorVec::Zero();
    d[i] = h;
    const auto plus = state_error(model_step(perturb(s, d), u, dt, vp), nominal);
    const auto minus = state_error(model_step(perturb(s, -d), u, dt, vp), nominal);
    out.A.col(i) = (plus - minus) / (2.0 * h);
  }
  for (int j = 0; j < kInputDim; ++j) {
    InputVec du = InputVec::Zero();
    du[j] = h;
    const auto plus = state_error(model_step(s, from_vec(to_vec(u) + du), dt, vp), nominal);
    const auto minus = state_error(model_step(s, from_vec(to_vec(u) - du), dt, vp), nominal);
    out.B.col(j) = (plus - minus) / (2.0 * h);
  }
  return out;
}

}  // namespace

TEST_SUITE("mpc") {

TEST_CASE("segment parameter selection follows the plan") {
  SegmentPlan plan;
  plan.segments = {{0, 100, SegmentClass::Flat}, {100, 250, SegmentClass::Ascent}, {250, 400, SegmentClass::Flat}};
  ParamVector w;
  for (int i = 0; i < 3; ++i) w.per_segment.push_back({1.0 + i, 1, 1, 1, 10 + i});
  CHECK(select_segment_params(plan, w, 0) == w.per_segment[0]);
  CHECK(select_segment_params(plan, w, 99) == w.per_segment[0]);
  CHECK(select_segment_params(plan, w, 250) == w.per_segment[2]);
  CHECK(select_segment_params(plan, w, 100) == w.per_segment[1]);

  SegmentPlan one;
  one.segments = {{0, 400, SegmentClass::Flat}};
  const auto u = ParamVector::uniform(1, SegmentParams{});
  for (std::size_t t : {0u, 17u, 399u}) CHECK(select_segment_params(one, u, t) == u.per_segment[0]);
}

TEST_CASE("cost matrices are built from the weights") {
  const FixedMpcConfig fixed;
  const auto unit = build_cost({1, 1, 1, 1, 10}, fixed);
  CHECK(unit.q_diag == ErrorVec::Ones());
  CHECK(unit.r_diag == InputVec::Ones());

  const auto free_xy = build_cost({0, 1, 1, 1, 10}, fixed);
  CHECK((free_xy.q_diag.array() == 0.0).count() == 2);
  CHECK(free_xy.q_diag[0] == 0.0);
  CHECK(free_xy.q_diag[1] == 0.0);

  ErrorVec expected;
  expected << 100, 100, 50, 5, 5, 5, 10, 10, 10;
  CHECK(build_cost({100, 50, 5, 10, 10}, fixed).q_diag == expected);

  FixedMpcConfig r;
  r.r_thrust = 2.0;
  r.r_pitchroll = 3.0;
  r.r_yaw = 4.0;
  CHECK(build_cost({}, r).r_diag == InputVec(2, 3, 3, 4));
}

TEST_CASE("hover linearization") {
  const VehicleParams vp;
  const double dt = 0.05;
  const QuadState s = QuadState::hover_at(Vec3(0, 0, 5));
  const auto lin = linearize_dynamics(s, {vp.hover_thrust(), Vec3::Zero()}, dt, vp);
  const auto fd = finite_difference(s, {vp.hover_thrust(), Vec3::Zero()}, dt, vp);
  CHECK((lin.A.block<3, 3>(0, 6) - dt * Mat3::Identity()).norm() < 1e-12);
  CHECK((fd.A.block<3, 3>(0, 6) - dt * Mat3::Identity()).norm() < 1e-6);
  CHECK(lin.B(8, 0) == doctest::Approx(dt / vp.mass));
  CHECK(fd.B(8, 0) == doctest::Approx(dt / vp.mass).epsilon(1e-6));
  CHECK(std::abs(fd.B(6, 0)) < 1e-9);
  CHECK(std::abs(fd.B(7, 0)) < 1e-9);
}

TEST_CASE("property: jacobians match central finite differences") {
  std::mt19937_64 rng(99);
  const VehicleParams vp;
  double worst_a = 0.0, worst_b = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto s = random_state(rng);
    const auto u = random_input(rng);
    const auto lin = linearize_dynamics(s, u, 0.05, vp);
    const auto fd = finite_difference(s, u, 0.05, vp);
    worst_a = std::max(worst_a, max_rel(lin.A, fd.A));
    worst_b = std::max(worst_b, max_rel(lin.B, fd.B));
  }
  CHECK(worst_a < 1e-4);
  CHECK(worst_b < 1e-4);
}

TEST_CASE("error state is zero at the reference and inverts perturb") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto s = random_state(rng);
    CHECK(state_error(s, as_reference(s)).norm() < 1e-12);
    ErrorVec d;
    for (int k = 0; k < kErrorDim; ++k) d[k] = 0.1 * std::uniform_real_distribution<double>(-1, 1)(rng);
    CHECK((state_error(perturb(s, d), as_reference(s)) - d).norm() < 1e-9);
  }
}

TEST_CASE("hovering on the reference returns hover thrust") {
  const VehicleParams vp;
  const FixedMpcConfig fixed;
  const SegmentParams sp;
  const Vec3 p(1, -2, 5);
  const auto window = hover_window(p, sp.horizon_len, vp);
  auto res = solve_step(QuadState::hover_at(p), window, sp, fixed, vp, {});
  CHECK(res.input.thrust == doctest::Approx(vp.hover_thrust()).epsilon(1e-6));
  CHECK(res.input.rates.norm() < 1e-6);

  // Warm started from hover as well.
  res = solve_step(QuadState::hover_at(p), window, sp, fixed, vp, res.state);
  CHECK(std::abs(res.input.thrust - vp.hover_thrust()) < 1e-6);
  CHECK(res.input.rates.norm() < 1e-6);
}

TEST_CASE("zero state weights return the feed-forward input") {
  const VehicleParams vp;
  const FixedMpcConfig fixed;
  const SegmentParams sp{0, 0, 0, 0, 20};
  const auto window = hover_window(Vec3(0, 0, 5), sp.horizon_len, vp);
  QuadState off = QuadState::hover_at(Vec3(2, -1, 4));
  off.velocity = Vec3(1, 0, -1);
  const auto res = solve_step(off, window, sp, fixed, vp, {});
  CHECK(res.input.thrust == doctest::Approx(vp.hover_thrust()).epsilon(1e-9));
  CHECK(res.input.rates.norm() < 1e-9);
}

TEST_CASE("property: returned inputs respect the box and the step lowers the model cost") {
  std::mt19937_64 rng(21);
  const VehicleParams vp;
  const FixedMpcConfig fixed;
  std::uniform_real_distribution<double> weight(0.0, 500.0);
  std::uniform_int_distribution<int> horizon(1, 40);
  for (int i = 0; i < 200; ++i) {
    const SegmentParams sp{weight(rng), weight(rng), weight(rng), weight(rng), horizon(rng)};
    const auto window = hover_window(Vec3(0, 0, 5), sp.horizon_len, vp);
    const auto res = solve_step(random_state(rng), window, sp, fixed, vp, {}, true);
    CHECK(clamp_input(res.input, vp) == res.input);
    CHECK(res.diagnostics.model_cost_after <= res.diagnostics.model_cost_before * (1.0 + 1e-12) + 1e-12);
    CHECK(res.state.inputs.size() == static_cast<std::size_t>(sp.horizon_len));
  }
}

TEST_CASE("non-finite warm start is reset") {
  const VehicleParams vp;
  const SegmentParams sp;
  SolverState bad;
  bad.inputs.assign(static_cast<std::size_t>(sp.horizon_len),
                    ControlInput{std::numeric_limits<double>::quiet_NaN(), Vec3::Zero()});
  const auto res = solve_step(QuadState::hover_at(Vec3(0, 0, 5)), hover_window(Vec3(0, 0, 5), sp.horizon_len, vp), sp,
                              FixedMpcConfig{}, vp, bad);
  CHECK(res.diagnostics.reset);
  CHECK(std::isfinite(res.input.thrust));
  CHECK(res.input.thrust == doctest::Approx(vp.hover_thrust()).epsilon(1e-6));
}

TEST_CASE("warm start resize truncates or repeats the terminal input") {
  SolverState st;
  for (int i = 0; i < 5; ++i) st.inputs.push_back({static_cast<double>(i), Vec3::Zero()});
  st.resize(3);
  REQUIRE(st.inputs.size() == 3);
  CHECK(st.inputs.back().thrust == 2.0);
  st.resize(6);
  REQUIRE(st.inputs.size() == 6);
  for (std::size_t i = 2; i < 6; ++i) CHECK(st.inputs[i].thrust == 2.0);
  SolverState empty;
  empty.resize(4);
  CHECK(empty.empty());
}

TEST_CASE("parameter vectors flatten and clamp") {
  const ParamVector w{{{1, 2, 3, 4, 5}, {6, 7, 8, 9, 10}}};
  CHECK(w.dimension() == 10);
  CHECK(ParamVector::from_flat(w.flatten(), 40) == w);

  const auto clamped = ParamVector::from_flat({-3, 2, 3, 4, 7.6, 1, 1, 1, 1, 99}, 40);
  CHECK(clamped.per_segment[0].q_pos_xy == 0.0);
  CHECK(clamped.per_segment[0].horizon_len == 8);
  CHECK(clamped.per_segment[1].horizon_len == 40);
  CHECK(ParamVector::from_flat({1, 1, 1, 1, -4}, 40).per_segment[0].horizon_len == 1);
  CHECK(clamped.valid(40));
  CHECK_THROWS(ParamVector::from_flat({1, 2, 3}, 40));

  const auto scaled = w.scaled_weights(0.5);
  CHECK(scaled.per_segment[1].q_velocity == 4.5);
  CHECK(scaled.per_segment[1].horizon_len == 10);

  CHECK_FALSE(SegmentParams{1, 1, 1, 1, 0}.valid(40));
  CHECK_FALSE(SegmentParams{1, -1, 1, 1, 5}.valid(40));
  CHECK_FALSE(SegmentParams{1, 1, 1, 1, 41}.valid(40));
  CHECK(SegmentParams::fallback() == SegmentParams{50, 50, 5, 10, 20});
}

TEST_CASE("feed-forward thrust balances gravity and reference acceleration") {
  const VehicleParams vp;
  const auto ref = make_circle_track(16.0, 12, 5.0, 0.005);
  const auto ff = reference_inputs(ref, vp);
  REQUIRE(ff.size() == ref.size());
  // The lap starts by accelerating tangentially at the 10 m/s^2 limit.
  CHECK(ff.front().thrust == doctest::Approx(vp.mass * std::hypot(vp.gravity, 10.0)).epsilon(1e-3));
  // Mid-lap the thrust must also supply the centripetal acceleration.
  const double ac = 25.0 / 16.0;
  CHECK(ff[ref.size() / 2].thrust == doctest::Approx(vp.mass * std::hypot(vp.gravity, ac)).epsilon(1e-3));
}

TEST_CASE("slow circle is tracked closely") {
  const auto ref = make_circle_track(16.0, 12, 5.0, 0.005);
  const auto plan = single_segment_plan(ref);
  const auto w = ParamVector::uniform(1, {100, 100, 10, 10, 20});
  EvaluationConfig cfg;
  cfg.record_trace = true;
  const auto out = rollout(ref, plan, w, 3, cfg);
  CHECK(out.all_passed());
  double sq = 0.0;
  for (const auto& row : out.trace) sq += (row.position - ref.at_time(row.t).position).squaredNorm();
  const double rmse = std::sqrt(sq / static_cast<double>(out.trace.size()));
  CHECK(rmse < 0.5);
}

}
