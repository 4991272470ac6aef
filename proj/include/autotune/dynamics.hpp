#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>

#include "autotune/rotation.hpp"

namespace autotune {

/// Rigid-body state. World frame is z-up; the attitude maps body to world.
struct QuadState {
  Vec3 position = Vec3::Zero();
  Quat attitude = Quat::Identity();
  Vec3 velocity = Vec3::Zero();
  Vec3 body_rates = Vec3::Zero();

  bool finite() const;
  static QuadState hover_at(const Vec3& position, double yaw = 0.0);
};

/// Collective thrust [N] and commanded body rates (roll, pitch, yaw) [rad/s].
struct ControlInput {
  double thrust = 0.0;
  Vec3 rates = Vec3::Zero();

  bool operator==(const ControlInput&) const = default;
};

struct NoiseConfig {
  double thrust_std = 0.05;
  double rate_std = 0.01;
  std::uint64_t seed = 0;

  bool active() const { return thrust_std > 0.0 || rate_std > 0.0; }
  static NoiseConfig off() { return {0.0, 0.0, 0}; }
};

struct VehicleParams {
  double mass = 1.0;
  double gravity = 9.81;
  double thrust_max = 20.0;
  double pitchroll_max = 10.0;
  double yaw_max = 3.0;
  // First-order body-rate tracking lag; zero means rates follow the command.
  double rate_tau = 0.03;
  NoiseConfig noise;

  double hover_thrust() const { return mass * gravity; }
  double thrust_to_weight() const { return thrust_max / (mass * gravity); }
  void set_thrust_to_weight(double twr) { thrust_max = twr * mass * gravity; }
  void validate() const;
};

struct CrashConfig {
  double max_position_error = 5.0;
  double floor_z = 0.0;
};

class SimulatorDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gaussian actuation noise. Each rollout owns one stream.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed) : engine_(seed) {}

  ControlInput perturb(const ControlInput& u, const NoiseConfig& cfg);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

ControlInput clamp_input(const ControlInput& u, const VehicleParams& vp);

/// One fixed RK4 step of the plant. Noise is drawn only when `noise` is
/// non-null and the vehicle's noise config is active. Throws
/// SimulatorDivergence on non-finite input state.
QuadState step(const QuadState& s, const ControlInput& u, double dt,
               const VehicleParams& vp, NoiseStream* noise = nullptr);

bool crashed(const QuadState& s, const Vec3& reference_position,
             const CrashConfig& cfg = {});

}  // namespace autotune
