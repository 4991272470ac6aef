#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "autotune/dynamics.hpp"
#include "autotune/mpc.hpp"
#include "autotune/segmentation.hpp"
#include "autotune/trajectory.hpp"

namespace autotune {

struct EvaluationConfig {
  double pass_radius = 1.3;   // m
  double pass_window = 0.0;   // s either side of t_r(i); 0 tests the nearest tick only
  double penalty_speed = 1.0; // m/s, converts remaining path length to time
  double sim_dt = 0.0025;
  bool record_trace = false;
  CrashConfig crash;
  VehicleParams vehicle;
  FixedMpcConfig mpc;

  void validate() const;
};

struct TraceRow {
  double t = 0.0;
  Vec3 position = Vec3::Zero();
  ControlInput input;
  std::size_t segment = 0;
};

enum class StopReason { Finished, MissedWaypoint, Crashed, ControllerFault };

const char* to_string(StopReason r);

struct EvaluationOutcome {
  std::vector<bool> passed;
  std::size_t stop_tick = 0;  // control ticks simulated
  double raw_time = 0.0;
  double penalized_time = 0.0;
  double completion = 0.0;
  StopReason reason = StopReason::Finished;
  Vec3 stop_position = Vec3::Zero();
  std::uint64_t seed = 0;
  std::vector<TraceRow> trace;

  bool all_passed() const;
};

/// Closed-loop run from hover at the reference start. Stops at the first
/// missed waypoint, a crash, or the end of the reference.
EvaluationOutcome rollout(const ReferenceTrajectory& ref, const SegmentPlan& plan,
                          const ParamVector& w, std::uint64_t seed,
                          const EvaluationConfig& cfg);

/// Pass test on a position trace sampled every `trace_dt` from t = 0: the
/// closest approach within `window` of t_ref must be strictly inside `radius`.
bool waypoint_passed(std::span<const Vec3> positions, double trace_dt, const Vec3& waypoint,
                     double t_ref, double radius, double window = 0.0);

/// Percentage of passed waypoints.
double trajectory_completion(const std::vector<bool>& passed);

/// raw_time plus the length of the polyline from the stop position through
/// every waypoint after the last passed one, divided by penalty_speed.
double penalized_time(double raw_time, const Vec3& stop_position,
                      const std::vector<Vec3>& waypoints, const std::vector<bool>& passed,
                      double penalty_speed = 1.0);

/// exp(-2 sqrt(t)).
double score(double t);

}  // namespace autotune
