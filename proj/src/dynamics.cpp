#include "autotune/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace autotune {

namespace {

struct Derivative {
  Vec3 dp;
  Eigen::Vector4d dq;  // (w, x, y, z)
  Vec3 dv;
  Vec3 dw;
};

struct RawState {
  Vec3 p;
  Eigen::Vector4d q;  // (w, x, y, z), not necessarily unit mid-step
  Vec3 v;
  Vec3 w;
};

Eigen::Vector4d quat_rate(const Eigen::Vector4d& q, const Vec3& w) {
  // 0.5 * q (x) (0, w)
  Eigen::Vector4d r;
  r[0] = -q[1] * w.x() - q[2] * w.y() - q[3] * w.z();
  r[1] = q[0] * w.x() + q[2] * w.z() - q[3] * w.y();
  r[2] = q[0] * w.y() - q[1] * w.z() + q[3] * w.x();
  r[3] = q[0] * w.z() + q[1] * w.y() - q[2] * w.x();
  return 0.5 * r;
}

Derivative derivative(const RawState& x, const ControlInput& u,
                      const VehicleParams& vp) {
  const Quat q(x.q[0], x.q[1], x.q[2], x.q[3]);
  // Rotation of body z by the (possibly non-unit) quaternion, normalized.
  const Vec3 thrust_dir = q.normalized() * Vec3::UnitZ();

  Derivative d;
  d.dp = x.v;
  d.dv = thrust_dir * (u.thrust / vp.mass) - Vec3(0.0, 0.0, vp.gravity);
  if (vp.rate_tau > 0.0) {
    d.dq = quat_rate(x.q, x.w);
    d.dw = (u.rates - x.w) / vp.rate_tau;
  } else {
    d.dq = quat_rate(x.q, u.rates);
    d.dw = Vec3::Zero();
  }
  return d;
}

RawState advance(const RawState& x, const Derivative& d, double h) {
  return {x.p + h * d.dp, x.q + h * d.dq, x.v + h * d.dv, x.w + h * d.dw};
}

}  // namespace

bool QuadState::finite() const {
  return position.allFinite() && attitude.coeffs().allFinite() &&
         velocity.allFinite() && body_rates.allFinite();
}

QuadState QuadState::hover_at(const Vec3& position, double yaw) {
  QuadState s;
  s.position = position;
  s.attitude = yaw_quat(yaw);
  return s;
}

void VehicleParams::validate() const {
  if (!(mass > 0.0) || !(gravity > 0.0) || !(thrust_max > 0.0) ||
      !(pitchroll_max > 0.0) || !(yaw_max > 0.0) || !(rate_tau >= 0.0)) {
    throw std::invalid_argument("vehicle parameters must be positive");
  }
  if (noise.thrust_std < 0.0 || noise.rate_std < 0.0) {
    throw std::invalid_argument("noise standard deviations must be >= 0");
  }
}

ControlInput NoiseStream::perturb(const ControlInput& u,
                                  const NoiseConfig& cfg) {
  ControlInput out = u;
  // Always draw four variates so the stream position does not depend on
  // which stds are zero.
  const double nt = normal_(engine_);
  const double nx = normal_(engine_);
  const double ny = normal_(engine_);
  const double nz = normal_(engine_);
  out.thrust += cfg.thrust_std * nt;
  out.rates += cfg.rate_std * Vec3(nx, ny, nz);
  return out;
}

ControlInput clamp_input(const ControlInput& u, const VehicleParams& vp) {
  ControlInput out;
  out.thrust = std::clamp(u.thrust, 0.0, vp.thrust_max);
  out.rates.x() = std::clamp(u.rates.x(), -vp.pitchroll_max, vp.pitchroll_max);
  out.rates.y() = std::clamp(u.rates.y(), -vp.pitchroll_max, vp.pitchroll_max);
  out.rates.z() = std::clamp(u.rates.z(), -vp.yaw_max, vp.yaw_max);
  return out;
}

QuadState step(const QuadState& s, const ControlInput& u, double dt,
               const VehicleParams& vp, NoiseStream* noise) {
  if (!s.finite()) throw SimulatorDivergence("non-finite state entering step");
  if (!std::isfinite(u.thrust) || !u.rates.allFinite()) {
    throw SimulatorDivergence("non-finite control input");
  }

  ControlInput applied = u;
  if (noise != nullptr && vp.noise.active()) {
    applied = clamp_input(noise->perturb(u, vp.noise), vp);
  }

  const RawState x0{s.position, Eigen::Vector4d(s.attitude.w(), s.attitude.x(),
                                                s.attitude.y(), s.attitude.z()),
                    s.velocity, s.body_rates};
  const Derivative k1 = derivative(x0, applied, vp);
  const Derivative k2 = derivative(advance(x0, k1, 0.5 * dt), applied, vp);
  const Derivative k3 = derivative(advance(x0, k2, 0.5 * dt), applied, vp);
  const Derivative k4 = derivative(advance(x0, k3, dt), applied, vp);

  const double w6 = dt / 6.0;
  QuadState out;
  out.position = x0.p + w6 * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
  out.velocity = x0.v + w6 * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
  const Eigen::Vector4d q =
      x0.q + w6 * (k1.dq + 2.0 * k2.dq + 2.0 * k3.dq + k4.dq);
  out.attitude = Quat(q[0], q[1], q[2], q[3]).normalized();
  if (vp.rate_tau > 0.0) {
    out.body_rates = x0.w + w6 * (k1.dw + 2.0 * k2.dw + 2.0 * k3.dw + k4.dw);
  } else {
    out.body_rates = applied.rates;
  }
  return out;
}

bool crashed(const QuadState& s, const Vec3& reference_position,
             const CrashConfig& cfg) {
  if (!s.finite()) return true;
  if (s.position.z() < cfg.floor_z) return true;
  return (s.position - reference_position).norm() > cfg.max_position_error;
}

}  // namespace autotune
