#include "autotune/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>

namespace autotune {

namespace {

double quadratic_model_cost(const std::vector<ErrorVec>& e, const std::vector<InputVec>& du,
                            const std::vector<InputVec>& u_offset,
                            const std::vector<Linearization>& lin, const StageCost& cost) {
  // sum_k |e_k + dx_k|_Q + sum_k |u_offset_k + du_k|_R with dx_0 = 0.
  ErrorVec dx = ErrorVec::Zero();
  double total = 0.0;
  for (std::size_t k = 0; k < du.size(); ++k) {
    const ErrorVec ek = e[k] + dx;
    const InputVec uk = u_offset[k] + du[k];
    total += ek.cwiseProduct(cost.q_diag).dot(ek) + uk.cwiseProduct(cost.r_diag).dot(uk);
    dx = lin[k].A * dx + lin[k].B * du[k];
  }
  const ErrorVec en = e.back() + dx;
  return total + en.cwiseProduct(cost.q_diag).dot(en);
}

struct Attempt {
  bool ok = false;
  ControlInput first;
  std::vector<ControlInput> plan;
  SolveDiagnostics diag;
};

Attempt riccati_iteration(const QuadState& s, const ReferenceWindow& window,
                          const StageCost& cost, const FixedMpcConfig& fixed,
                          const VehicleParams& vp, const std::vector<ControlInput>& warm,
                          bool diagnostics) {
  const std::size_t n = warm.size();
  const double h = fixed.horizon_step;

  std::vector<QuadState> nominal(n + 1);
  std::vector<Linearization> lin(n);
  std::vector<ErrorVec> err(n + 1);
  std::vector<InputVec> u_offset(n);
  nominal[0] = s;
  for (std::size_t k = 0; k < n; ++k) {
    lin[k] = linearize_dynamics(nominal[k], warm[k], h, vp);
    nominal[k + 1] = model_step(nominal[k], warm[k], h, vp);
    err[k] = state_error(nominal[k], window.states[k]);
    u_offset[k] = to_vec(warm[k]) - to_vec(window.inputs[k]);
  }
  err[n] = state_error(nominal[n], window.states[n]);
  for (const auto& e : err) {
    if (!e.allFinite()) return {};
  }

  StateMat P = StateMat(cost.q_diag.asDiagonal());
  ErrorVec p = cost.q_diag.cwiseProduct(err[n]);
  std::vector<Eigen::Matrix<double, kInputDim, kErrorDim>> K(n);
  std::vector<InputVec> d(n);
  for (std::size_t i = n; i-- > 0;) {
    const StateMat& A = lin[i].A;
    const InputMat& B = lin[i].B;
    const InputMat PB = P * B;
    const ErrorVec qx = cost.q_diag.cwiseProduct(err[i]) + A.transpose() * p;
    const InputVec qu = cost.r_diag.cwiseProduct(u_offset[i]) + B.transpose() * p;
    StateMat Qxx = A.transpose() * P * A;
    Qxx.diagonal() += cost.q_diag;
    InputCostMat Quu = B.transpose() * PB;
    Quu.diagonal() += cost.r_diag;
    const Eigen::Matrix<double, kInputDim, kErrorDim> Qux = PB.transpose() * A;

    const Eigen::LLT<InputCostMat> llt(Quu);
    if (llt.info() != Eigen::Success) return {};
    K[i] = -llt.solve(Qux);
    d[i] = -llt.solve(qu);
    P = Qxx + Qux.transpose() * K[i];
    P = 0.5 * (P + P.transpose()).eval();
    p = qx + Qux.transpose() * d[i];
  }

  Attempt out;
  out.plan.resize(n);
  ErrorVec dx = ErrorVec::Zero();
  for (std::size_t k = 0; k < n; ++k) {
    const InputVec du = K[k] * dx + d[k];
    const ControlInput u = clamp_input(from_vec(to_vec(warm[k]) + du), vp);
    out.plan[k] = u;
    dx = lin[k].A * dx + lin[k].B * (to_vec(u) - to_vec(warm[k]));
  }
  if (!dx.allFinite()) return {};

  if (diagnostics) {
    std::vector<InputVec> zero(n, InputVec::Zero());
    std::vector<InputVec> step(n);
    ErrorVec ddx = ErrorVec::Zero();
    for (std::size_t k = 0; k < n; ++k) {
      step[k] = K[k] * ddx + d[k];
      ddx = lin[k].A * ddx + lin[k].B * step[k];
    }
    out.diag.model_cost_before = quadratic_model_cost(err, zero, u_offset, lin, cost);
    out.diag.model_cost_after = quadratic_model_cost(err, step, u_offset, lin, cost);
  }
  out.first = out.plan.front();
  out.ok = std::isfinite(out.first.thrust) && out.first.rates.allFinite();
  return out;
}

}  // namespace

bool SegmentParams::valid(int horizon_max) const {
  const auto a = to_array();
  for (int i = 0; i < 4; ++i) {
    if (!std::isfinite(a[i]) || a[i] < 0.0) return false;
  }
  return horizon_len >= 1 && horizon_len <= horizon_max;
}

std::array<double, kParamsPerSegment> SegmentParams::to_array() const {
  return {q_pos_xy, q_pos_z, q_attitude, q_velocity, static_cast<double>(horizon_len)};
}

SegmentParams SegmentParams::from_array(const std::array<double, kParamsPerSegment>& a,
                                        int horizon_max) {
  auto weight = [](double v) { return std::isfinite(v) ? std::max(0.0, v) : 0.0; };
  SegmentParams p;
  p.q_pos_xy = weight(a[0]);
  p.q_pos_z = weight(a[1]);
  p.q_attitude = weight(a[2]);
  p.q_velocity = weight(a[3]);
  const double hz = std::isfinite(a[4]) ? std::round(a[4]) : 1.0;
  p.horizon_len = static_cast<int>(std::clamp(hz, 1.0, static_cast<double>(horizon_max)));
  return p;
}

std::vector<double> ParamVector::flatten() const {
  std::vector<double> out;
  out.reserve(dimension());
  for (const auto& sp : per_segment) {
    const auto a = sp.to_array();
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

ParamVector ParamVector::from_flat(const std::vector<double>& flat, int horizon_max) {
  if (flat.size() % kParamsPerSegment != 0) {
    throw std::invalid_argument("flat parameter vector length is not a multiple of 5");
  }
  ParamVector w;
  for (std::size_t i = 0; i < flat.size(); i += kParamsPerSegment) {
    std::array<double, kParamsPerSegment> a{};
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(i), kParamsPerSegment, a.begin());
    w.per_segment.push_back(SegmentParams::from_array(a, horizon_max));
  }
  return w;
}

ParamVector ParamVector::uniform(std::size_t n_segments, const SegmentParams& p) {
  return ParamVector{std::vector<SegmentParams>(n_segments, p)};
}

bool ParamVector::valid(int horizon_max) const {
  return !per_segment.empty() &&
         std::all_of(per_segment.begin(), per_segment.end(),
                     [&](const SegmentParams& p) { return p.valid(horizon_max); });
}

ParamVector ParamVector::scaled_weights(double factor) const {
  ParamVector out = *this;
  for (auto& p : out.per_segment) {
    p.q_pos_xy *= factor;
    p.q_pos_z *= factor;
    p.q_attitude *= factor;
    p.q_velocity *= factor;
  }
  return out;
}

void FixedMpcConfig::validate() const {
  if (r_thrust < 0.0 || r_pitchroll < 0.0 || r_yaw < 0.0) {
    throw std::invalid_argument("input weights must be non-negative");
  }
  if (!(control_freq > 0.0) || !(horizon_step > 0.0) || horizon_max < 1) {
    throw std::invalid_argument("invalid MPC timing configuration");
  }
}

StageCost build_cost(const SegmentParams& sp, const FixedMpcConfig& fixed) {
  StageCost c;
  c.q_diag << sp.q_pos_xy, sp.q_pos_xy, sp.q_pos_z, sp.q_attitude, sp.q_attitude,
      sp.q_attitude, sp.q_velocity, sp.q_velocity, sp.q_velocity;
  c.r_diag << fixed.r_thrust, fixed.r_pitchroll, fixed.r_pitchroll, fixed.r_yaw;
  return c;
}

QuadState model_step(const QuadState& s, const ControlInput& u, double dt,
                     const VehicleParams& vp) {
  const Vec3 acc = s.attitude * Vec3::UnitZ() * (u.thrust / vp.mass) -
                   Vec3(0.0, 0.0, vp.gravity);
  QuadState out;
  out.position = s.position + s.velocity * dt + 0.5 * dt * dt * acc;
  out.velocity = s.velocity + dt * acc;
  out.attitude = (s.attitude * quat_exp(u.rates * dt)).normalized();
  out.body_rates = u.rates;
  return out;
}

Linearization linearize_dynamics(const QuadState& s, const ControlInput& u, double dt,
                                 const VehicleParams& vp) {
  const Mat3 rot = s.attitude.toRotationMatrix();
  const Vec3 z_body = rot.col(2);
  // d(acc)/d(dtheta) for R Exp(dtheta) e_z.
  const Mat3 acc_att = -rot * skew(Vec3::UnitZ()) * (u.thrust / vp.mass);
  const Vec3 phi = u.rates * dt;

  Linearization lin;
  lin.A.setZero();
  lin.A.block<3, 3>(0, 0) = Mat3::Identity();
  lin.A.block<3, 3>(0, 3) = 0.5 * dt * dt * acc_att;
  lin.A.block<3, 3>(0, 6) = dt * Mat3::Identity();
  lin.A.block<3, 3>(3, 3) = quat_exp(phi).toRotationMatrix().transpose();
  lin.A.block<3, 3>(6, 3) = dt * acc_att;
  lin.A.block<3, 3>(6, 6) = Mat3::Identity();

  lin.B.setZero();
  lin.B.block<3, 1>(0, 0) = 0.5 * dt * dt * z_body / vp.mass;
  lin.B.block<3, 1>(6, 0) = dt * z_body / vp.mass;
  lin.B.block<3, 3>(3, 1) = dt * right_jacobian(phi);
  return lin;
}

ErrorVec state_error(const QuadState& s, const ReferenceSample& ref) {
  ErrorVec e;
  e.segment<3>(0) = s.position - ref.position;
  e.segment<3>(3) = quat_log(ref.attitude.conjugate() * s.attitude);
  e.segment<3>(6) = s.velocity - ref.velocity;
  return e;
}

QuadState perturb(const QuadState& s, const ErrorVec& dx) {
  QuadState out = s;
  out.position += dx.segment<3>(0);
  out.attitude = (s.attitude * quat_exp(dx.segment<3>(3))).normalized();
  out.velocity += dx.segment<3>(6);
  return out;
}

void SolverState::resize(std::size_t horizon) {
  if (inputs.empty() || horizon == inputs.size()) return;
  if (horizon < inputs.size()) {
    inputs.resize(horizon);
  } else {
    inputs.resize(horizon, inputs.back());
  }
}

SolveResult solve_step(const QuadState& s, const ReferenceWindow& window,
                       const SegmentParams& sp, const FixedMpcConfig& fixed,
                       const VehicleParams& vp, SolverState solver, bool diagnostics) {
  const auto n = static_cast<std::size_t>(sp.horizon_len);
  if (window.states.size() < n + 1 || window.inputs.size() < n) {
    throw std::invalid_argument("reference window shorter than the horizon");
  }
  const StageCost cost = build_cost(sp, fixed);
  const std::vector<ControlInput> reference_plan(window.inputs.begin(),
                                                 window.inputs.begin() + static_cast<std::ptrdiff_t>(n));

  bool reset = false;
  if (solver.empty()) {
    solver.inputs = reference_plan;
  } else {
    solver.resize(n);
  }
  const bool warm_finite = std::all_of(solver.inputs.begin(), solver.inputs.end(), [](const ControlInput& u) {
    return std::isfinite(u.thrust) && u.rates.allFinite();
  });
  Attempt attempt;
  if (warm_finite) attempt = riccati_iteration(s, window, cost, fixed, vp, solver.inputs, diagnostics);
  if (!attempt.ok) {
    reset = true;
    solver.inputs = reference_plan;
    attempt = riccati_iteration(s, window, cost, fixed, vp, solver.inputs, diagnostics);
    if (!attempt.ok) throw ControllerFault("MPC iteration failed after warm-start reset");
  }

  // Shift the solution by one control period; the horizon grid is coarser,
  // so interpolate between knots.
  const double frac = std::clamp(fixed.control_period() / fixed.horizon_step, 0.0, 1.0);
  SolverState next;
  next.segment = solver.segment;
  next.inputs.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const InputVec a = to_vec(attempt.plan[k]);
    const InputVec b = to_vec(attempt.plan[std::min(k + 1, n - 1)]);
    next.inputs[k] = from_vec(a + frac * (b - a));
  }

  SolveResult result;
  result.input = clamp_input(attempt.first, vp);
  result.state = std::move(next);
  result.diagnostics = attempt.diag;
  result.diagnostics.reset = reset;
  return result;
}

const SegmentParams& select_segment_params(const SegmentPlan& plan, const ParamVector& w,
                                           std::size_t tick) {
  const std::size_t idx = plan.segment_at(tick);
  if (idx >= w.per_segment.size()) {
    throw std::invalid_argument("parameter vector does not cover the segment plan");
  }
  return w.per_segment[idx];
}

std::vector<ControlInput> reference_inputs(const ReferenceTrajectory& ref,
                                           const VehicleParams& vp) {
  const auto acc = reference_accelerations(ref);
  std::vector<ControlInput> out(ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const Vec3 f = acc[i] + Vec3(0.0, 0.0, vp.gravity);
    out[i].thrust = std::clamp(vp.mass * f.norm(), 0.0, vp.thrust_max);
    double yaw_rate = 0.0;
    if (ref.size() > 1) {
      const std::size_t lo = i == 0 ? 0 : i - 1;
      const std::size_t hi = i + 1 == ref.size() ? i : i + 1;
      if (hi > lo) {
        double dyaw = yaw_of(ref.samples[hi].attitude) - yaw_of(ref.samples[lo].attitude);
        dyaw = std::remainder(dyaw, 2.0 * std::numbers::pi);
        yaw_rate = dyaw / (ref.dt * static_cast<double>(hi - lo));
      }
    }
    out[i].rates = Vec3(0.0, 0.0, std::clamp(yaw_rate, -vp.yaw_max, vp.yaw_max));
  }
  return out;
}

MpcController::MpcController(const ReferenceTrajectory& ref, const SegmentPlan& plan,
                             const ParamVector& w, const FixedMpcConfig& fixed,
                             const VehicleParams& vp)
    : ref_(ref), plan_(plan), w_(w), fixed_(fixed), vp_(vp),
      ref_inputs_(reference_inputs(ref, vp)) {
  if (w.segments() != plan.size()) {
    throw std::invalid_argument("parameter vector does not match the segment plan");
  }
}

ReferenceWindow MpcController::window(double t, int horizon) const {
  ReferenceWindow win;
  const auto n = static_cast<std::size_t>(horizon);
  win.states.reserve(n + 1);
  win.inputs.reserve(n);
  for (std::size_t k = 0; k <= n; ++k) {
    const std::size_t idx = ref_.index_at(t + static_cast<double>(k) * fixed_.horizon_step);
    win.states.push_back(ref_.samples[idx]);
    if (k < n) win.inputs.push_back(ref_inputs_[idx]);
  }
  return win;
}

ControlInput MpcController::control(const QuadState& s, double t) {
  const std::size_t tick = ref_.index_at(t);
  const std::size_t seg = plan_.segment_at(tick);
  const SegmentParams& sp = select_segment_params(plan_, w_, tick);
  solver_.segment = seg;
  SolveResult r = solve_step(s, window(t, sp.horizon_len), sp, fixed_, vp_,
                             std::move(solver_), collect_);
  solver_ = std::move(r.state);
  diag_ = r.diagnostics;
  return r.input;
}

}  // namespace autotune
