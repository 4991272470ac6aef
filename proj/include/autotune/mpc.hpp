#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "autotune/dynamics.hpp"
#include "autotune/segmentation.hpp"
#include "autotune/trajectory.hpp"

namespace autotune {

inline constexpr int kErrorDim = 9;
inline constexpr int kInputDim = 4;
inline constexpr int kParamsPerSegment = 5;

using ErrorVec = Eigen::Matrix<double, kErrorDim, 1>;
using InputVec = Eigen::Matrix<double, kInputDim, 1>;
using StateMat = Eigen::Matrix<double, kErrorDim, kErrorDim>;
using InputMat = Eigen::Matrix<double, kErrorDim, kInputDim>;
using InputCostMat = Eigen::Matrix<double, kInputDim, kInputDim>;

/// Tuned per-segment controller parameters.
struct SegmentParams {
  double q_pos_xy = 50.0;
  double q_pos_z = 50.0;
  double q_attitude = 5.0;
  double q_velocity = 10.0;
  int horizon_len = 20;

  /// Mid-range values used whenever nothing better is known.
  static SegmentParams fallback() { return {}; }
  bool valid(int horizon_max) const;
  std::array<double, kParamsPerSegment> to_array() const;
  static SegmentParams from_array(const std::array<double, kParamsPerSegment>& a,
                                  int horizon_max);
  bool operator==(const SegmentParams&) const = default;
};

/// The tuned variable: one SegmentParams per plan segment, in track order.
struct ParamVector {
  std::vector<SegmentParams> per_segment;

  std::size_t segments() const { return per_segment.size(); }
  std::size_t dimension() const { return per_segment.size() * kParamsPerSegment; }
  std::vector<double> flatten() const;
  /// Rounds horizons and clamps everything into the valid box.
  static ParamVector from_flat(const std::vector<double>& flat, int horizon_max);
  static ParamVector uniform(std::size_t n_segments, const SegmentParams& p);
  bool valid(int horizon_max) const;
  /// Multiplies every state weight (not the horizon) by `factor`.
  ParamVector scaled_weights(double factor) const;
  bool operator==(const ParamVector&) const = default;
};

struct FixedMpcConfig {
  double r_thrust = 1.0;
  double r_pitchroll = 1.0;
  double r_yaw = 1.0;
  double control_freq = 200.0;
  double horizon_step = 0.05;
  int horizon_max = 40;

  double control_period() const { return 1.0 / control_freq; }
  void validate() const;
};

struct StageCost {
  ErrorVec q_diag;
  InputVec r_diag;
};

/// Diagonal Q over [dp_xy, dp_z, d_attitude, dv] and R over
/// [thrust, roll rate, pitch rate, yaw rate].
StageCost build_cost(const SegmentParams& sp, const FixedMpcConfig& fixed);

struct Linearization {
  StateMat A;
  InputMat B;
};

/// Noise-free prediction model: exact rotation at the commanded rates,
/// thrust direction frozen over the step.
QuadState model_step(const QuadState& s, const ControlInput& u, double dt,
                     const VehicleParams& vp);

/// Jacobians of model_step in error coordinates
/// (p + dp, q * Exp(dtheta), v + dv).
Linearization linearize_dynamics(const QuadState& s, const ControlInput& u, double dt,
                                 const VehicleParams& vp);

/// Manifold error [p - p_ref, Log(q_ref^-1 q), v - v_ref].
ErrorVec state_error(const QuadState& s, const ReferenceSample& ref);

/// Error-space perturbation used by linearize_dynamics.
QuadState perturb(const QuadState& s, const ErrorVec& dx);

inline InputVec to_vec(const ControlInput& u) {
  return InputVec(u.thrust, u.rates.x(), u.rates.y(), u.rates.z());
}
inline ControlInput from_vec(const InputVec& v) {
  return {v[0], Vec3(v[1], v[2], v[3])};
}

/// Reference states at the horizon knots (horizon_len + 1) and the
/// feed-forward inputs between them (horizon_len).
struct ReferenceWindow {
  std::vector<ReferenceSample> states;
  std::vector<ControlInput> inputs;
};

/// Warm start carried from one control tick to the next.
struct SolverState {
  std::vector<ControlInput> inputs;
  std::size_t segment = std::numeric_limits<std::size_t>::max();

  bool empty() const { return inputs.empty(); }
  /// Truncates, or pads by repeating the terminal input.
  void resize(std::size_t horizon);
};

struct SolveDiagnostics {
  // Local quadratic model evaluated at zero step and at the unclamped step.
  double model_cost_before = 0.0;
  double model_cost_after = 0.0;
  bool reset = false;
};

struct SolveResult {
  ControlInput input;
  SolverState state;
  SolveDiagnostics diagnostics;
};

class ControllerFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One real-time iteration: roll the warm start through the model, linearize
/// along it, run a time-varying Riccati pass, clamp the inputs on the forward
/// pass and shift the result by one control period.
SolveResult solve_step(const QuadState& s, const ReferenceWindow& window,
                       const SegmentParams& sp, const FixedMpcConfig& fixed,
                       const VehicleParams& vp, SolverState solver,
                       bool diagnostics = false);

const SegmentParams& select_segment_params(const SegmentPlan& plan, const ParamVector& w,
                                           std::size_t tick);

/// Feed-forward inputs along a reference: thrust from the reference
/// acceleration, yaw rate from the heading change.
std::vector<ControlInput> reference_inputs(const ReferenceTrajectory& ref,
                                           const VehicleParams& vp);

/// Per-rollout controller: binds a reference, a segment plan and a parameter
/// vector, and owns the warm start.
class MpcController {
 public:
  MpcController(const ReferenceTrajectory& ref, const SegmentPlan& plan, const ParamVector& w,
                const FixedMpcConfig& fixed, const VehicleParams& vp);

  /// Control input for the reference tick nearest time t.
  ControlInput control(const QuadState& s, double t);

  const SolveDiagnostics& last_diagnostics() const { return diag_; }
  void set_collect_diagnostics(bool on) { collect_ = on; }
  std::size_t active_segment() const { return solver_.segment; }

  ReferenceWindow window(double t, int horizon) const;

 private:
  const ReferenceTrajectory& ref_;
  const SegmentPlan& plan_;
  const ParamVector& w_;
  FixedMpcConfig fixed_;
  VehicleParams vp_;
  std::vector<ControlInput> ref_inputs_;
  SolverState solver_;
  SolveDiagnostics diag_;
  bool collect_ = false;
};

}  // namespace autotune
