#include "autotune/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace autotune {

void EvaluationConfig::validate() const {
  if (!(pass_radius > 0.0) || pass_window < 0.0 || !(penalty_speed > 0.0) || !(sim_dt > 0.0)) {
    throw std::invalid_argument("invalid evaluation configuration");
  }
  vehicle.validate();
  mpc.validate();
}

const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::Finished: return "finished";
    case StopReason::MissedWaypoint: return "missed_waypoint";
    case StopReason::Crashed: return "crashed";
    case StopReason::ControllerFault: return "controller_fault";
  }
  return "finished";
}

bool EvaluationOutcome::all_passed() const {
  return !passed.empty() && std::all_of(passed.begin(), passed.end(), [](bool b) { return b; });
}

bool waypoint_passed(std::span<const Vec3> positions, double trace_dt, const Vec3& waypoint,
                     double t_ref, double radius, double window) {
  if (positions.empty()) return false;
  const auto last = static_cast<long long>(positions.size()) - 1;
  const long long lo = std::clamp(std::llround((t_ref - window) / trace_dt), 0LL, last);
  const long long hi = std::clamp(std::llround((t_ref + window) / trace_dt), 0LL, last);
  for (long long k = lo; k <= hi; ++k) {
    if ((positions[static_cast<std::size_t>(k)] - waypoint).norm() < radius) return true;
  }
  return false;
}

double trajectory_completion(const std::vector<bool>& passed) {
  if (passed.empty()) throw std::invalid_argument("completion needs at least one waypoint");
  const auto n = std::count(passed.begin(), passed.end(), true);
  return 100.0 * static_cast<double>(n) / static_cast<double>(passed.size());
}

double penalized_time(double raw_time, const Vec3& stop_position,
                      const std::vector<Vec3>& waypoints, const std::vector<bool>& passed,
                      double penalty_speed) {
  std::size_t next = 0;
  for (std::size_t i = 0; i < passed.size(); ++i) {
    if (passed[i]) next = i + 1;
  }
  if (next >= waypoints.size()) return raw_time;
  double length = (waypoints[next] - stop_position).norm();
  for (std::size_t i = next + 1; i < waypoints.size(); ++i) {
    length += (waypoints[i] - waypoints[i - 1]).norm();
  }
  return raw_time + length / penalty_speed;
}

double score(double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("score: time must be non-negative");
  return std::exp(-2.0 * std::sqrt(t));
}

EvaluationOutcome rollout(const ReferenceTrajectory& ref, const SegmentPlan& plan,
                          const ParamVector& w, std::uint64_t seed,
                          const EvaluationConfig& cfg) {
  if (ref.samples.empty()) throw std::invalid_argument("rollout: empty reference");
  const double ctrl_dt = cfg.mpc.control_period();
  const int substeps = std::max(1, static_cast<int>(std::lround(ctrl_dt / cfg.sim_dt)));
  const double sim_dt = ctrl_dt / substeps;
  const auto n_ticks = static_cast<std::size_t>(std::llround(ref.duration() / ctrl_dt));
  const std::size_t n_wp = ref.waypoints.size();

  MpcController controller(ref, plan, w, cfg.mpc, cfg.vehicle);
  NoiseStream noise(seed);

  EvaluationOutcome out;
  out.seed = seed;
  out.passed.assign(n_wp, false);

  QuadState state = QuadState::hover_at(ref.samples.front().position,
                                        yaw_of(ref.samples.front().attitude));

  // Window of control ticks over which each waypoint is judged.
  std::vector<std::size_t> judge_tick(n_wp);
  std::vector<std::size_t> open_tick(n_wp);
  for (std::size_t i = 0; i < n_wp; ++i) {
    const double t = ref.waypoint_times[i];
    open_tick[i] = static_cast<std::size_t>(std::max(0LL, std::llround((t - cfg.pass_window) / ctrl_dt)));
    judge_tick[i] = std::min<std::size_t>(
        n_ticks, static_cast<std::size_t>(std::max(0LL, std::llround((t + cfg.pass_window) / ctrl_dt))));
  }
  std::vector<double> closest(n_wp, std::numeric_limits<double>::infinity());
  std::size_t next_wp = 0;

  // Returns false when a waypoint is missed at this tick.
  auto judge = [&](std::size_t tick) {
    for (std::size_t i = next_wp; i < n_wp && open_tick[i] <= tick; ++i) {
      closest[i] = std::min(closest[i], (state.position - ref.waypoints[i]).norm());
    }
    while (next_wp < n_wp && judge_tick[next_wp] <= tick) {
      if (!(closest[next_wp] < cfg.pass_radius)) return false;
      out.passed[next_wp] = true;
      ++next_wp;
    }
    return true;
  };

  if (cfg.record_trace) out.trace.push_back({0.0, state.position, {}, plan.segment_at(0)});
  out.reason = StopReason::Finished;
  std::size_t tick = 0;
  if (!judge(0)) {
    out.reason = StopReason::MissedWaypoint;
  }
  while (out.reason == StopReason::Finished && tick < n_ticks) {
    const double t = static_cast<double>(tick) * ctrl_dt;
    ControlInput u;
    try {
      u = controller.control(state, t);
      for (int s = 0; s < substeps; ++s) state = step(state, u, sim_dt, cfg.vehicle, &noise);
    } catch (const ControllerFault&) {
      out.reason = StopReason::ControllerFault;
      break;
    } catch (const SimulatorDivergence&) {
      out.reason = StopReason::Crashed;
      break;
    }
    ++tick;
    const double t1 = static_cast<double>(tick) * ctrl_dt;
    if (cfg.record_trace) {
      out.trace.push_back({t1, state.position, u, controller.active_segment()});
    }
    if (crashed(state, ref.at_time(t1).position, cfg.crash)) {
      out.reason = StopReason::Crashed;
      break;
    }
    if (!judge(tick)) out.reason = StopReason::MissedWaypoint;
  }

  out.stop_tick = tick;
  out.raw_time = static_cast<double>(tick) * ctrl_dt;
  out.stop_position = state.position.allFinite() ? state.position : ref.at_time(out.raw_time).position;
  out.completion = n_wp == 0 ? 100.0 : trajectory_completion(out.passed);
  out.penalized_time = penalized_time(out.raw_time, out.stop_position, ref.waypoints, out.passed,
                                      cfg.penalty_speed);
  return out;
}

}  // namespace autotune
