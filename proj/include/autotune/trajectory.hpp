#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "autotune/rotation.hpp"

namespace autotune {

struct ReferenceSample {
  Vec3 position = Vec3::Zero();
  Quat attitude = Quat::Identity();
  Vec3 velocity = Vec3::Zero();
};

/// Uniformly sampled reference with its ordered gate list.
///
/// Sample i is at time i * dt. waypoint_times[i] is the time at which the
/// reference passes waypoints[i].
struct ReferenceTrajectory {
  double dt = 0.005;
  std::vector<ReferenceSample> samples;
  std::vector<Vec3> waypoints;
  std::vector<double> waypoint_times;

  std::size_t size() const { return samples.size(); }
  double duration() const;
  /// Index of the sample nearest to time t, clamped to the valid range.
  std::size_t index_at(double t) const;
  const ReferenceSample& at_time(double t) const { return samples[index_at(t)]; }
  void validate() const;
};

enum class TrackKind { Circle, Drop, Custom };

struct TrackSpec {
  TrackKind kind = TrackKind::Drop;
  // Circle.
  double radius = 16.0;
  int n_waypoints = 12;
  // Drop.
  double ascent_height = 21.0;
  double ascent_length = 50.0;
  double descent_height = 16.0;
  double descent_length = 8.0;
  double turn_radius = 16.0;
  // Shared.
  double altitude = 3.0;
  double speed = 8.0;
  // Per-leg speeds, overriding `speed` when non-empty. The Drop default eases
  // out of hover, slows for the drop and eases back into hover.
  std::vector<double> leg_speeds{5, 10, 12, 12, 10, 9, 9, 10, 12, 12, 11, 6};
  double accel_limit = 10.0;
};

class TrajectoryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Planar lap at constant altitude with trapezoidal speed ramps. Waypoints are
/// equally spaced by arc length; the last one closes the lap.
ReferenceTrajectory make_circle_track(double radius, int n_waypoints,
                                      double speed, double dt,
                                      double altitude = 5.0,
                                      double accel_limit = 10.0);

/// Climb, steep drop, then a level semicircle, through the spline generator.
ReferenceTrajectory make_drop_track(const TrackSpec& spec, double dt);

/// Gate positions the Drop track passes through, start point first.
std::vector<Vec3> drop_track_points(const TrackSpec& spec);

/// Time-parameterized cubic spline through `points` with zero velocity at both
/// ends. Leg i (points[i] -> points[i+1]) takes |leg| / speeds[i] seconds. A
/// single speed applies to every leg. points[0] is the start position and is
/// not listed as a waypoint.
ReferenceTrajectory spline_reference(const std::vector<Vec3>& points,
                                     const std::vector<double>& speeds,
                                     double dt);

ReferenceTrajectory make_track(const TrackSpec& spec, double dt);

/// Reference CSV: `t,x,y,z,qw,qx,qy,qz,vx,vy,vz`; `#` lines are comments. Waypoints are read from the
/// sibling file written by save_reference_csv (see waypoint_csv_path) when it
/// exists.
ReferenceTrajectory load_reference_csv(const std::filesystem::path& path,
                                       bool ned = false);
void save_reference_csv(const ReferenceTrajectory& ref,
                        const std::filesystem::path& path);

/// `x,y,z,t_ref`.
void load_waypoints_csv(const std::filesystem::path& path,
                        ReferenceTrajectory& ref, bool ned = false);
void save_waypoints_csv(const ReferenceTrajectory& ref,
                        const std::filesystem::path& path);
std::filesystem::path waypoint_csv_path(const std::filesystem::path& reference);
std::string reference_csv_text(const ReferenceTrajectory& ref);
std::string waypoints_csv_text(const ReferenceTrajectory& ref);

/// Reference acceleration by central differences of the reference velocity.
std::vector<Vec3> reference_accelerations(const ReferenceTrajectory& ref);

}  // namespace autotune
