#include "autotune/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace autotune {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::size_t sample_count(double duration, double dt) {
  // Trailing partial step is padded with a hover sample at the end pose.
  return static_cast<std::size_t>(std::ceil(duration / dt - 1e-9)) + 1;
}

// Speed-ramp profile along a path of length `length`.
struct Trapezoid {
  double length;
  double accel;
  double cruise_speed;
  double ramp_time;
  double ramp_dist;
  double total_time;

  Trapezoid(double length_, double speed, double accel_)
      : length(length_), accel(accel_) {
    if (speed * speed / accel <= length) {
      cruise_speed = speed;
    } else {
      cruise_speed = std::sqrt(accel * length);
    }
    ramp_time = cruise_speed / accel;
    ramp_dist = 0.5 * cruise_speed * ramp_time;
    total_time = 2.0 * ramp_time + (length - 2.0 * ramp_dist) / cruise_speed;
  }

  double distance(double t) const {
    t = std::clamp(t, 0.0, total_time);
    if (t < ramp_time) return 0.5 * accel * t * t;
    const double t_down = total_time - ramp_time;
    if (t <= t_down) return ramp_dist + cruise_speed * (t - ramp_time);
    const double r = total_time - t;
    return length - 0.5 * accel * r * r;
  }

  double speed(double t) const {
    t = std::clamp(t, 0.0, total_time);
    if (t < ramp_time) return accel * t;
    const double t_down = total_time - ramp_time;
    if (t <= t_down) return cruise_speed;
    return accel * (total_time - t);
  }

  double time_at(double s) const {
    s = std::clamp(s, 0.0, length);
    if (s <= ramp_dist) return std::sqrt(2.0 * s / accel);
    if (s <= length - ramp_dist) return ramp_time + (s - ramp_dist) / cruise_speed;
    return total_time - std::sqrt(2.0 * (length - s) / accel);
  }
};

// Clamped (zero end slope) cubic spline in one coordinate.
class ClampedSpline {
 public:
  ClampedSpline(std::vector<double> knots, std::vector<double> values)
      : t_(std::move(knots)), y_(std::move(values)), m_(t_.size(), 0.0) {
    const std::size_t n = t_.size();
    std::vector<double> sub(n, 0.0), diag(n, 0.0), sup(n, 0.0), rhs(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double h_prev = i > 0 ? t_[i] - t_[i - 1] : 0.0;
      const double h_next = i + 1 < n ? t_[i + 1] - t_[i] : 0.0;
      const double slope_prev = i > 0 ? (y_[i] - y_[i - 1]) / h_prev : 0.0;
      const double slope_next = i + 1 < n ? (y_[i + 1] - y_[i]) / h_next : 0.0;
      sub[i] = h_prev;
      diag[i] = 2.0 * (h_prev + h_next);
      sup[i] = h_next;
      rhs[i] = 6.0 * (slope_next - slope_prev);
    }
    // Thomas algorithm.
    for (std::size_t i = 1; i < n; ++i) {
      const double w = sub[i] / diag[i - 1];
      diag[i] -= w * sup[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    m_[n - 1] = rhs[n - 1] / diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) {
      m_[i] = (rhs[i] - sup[i] * m_[i + 1]) / diag[i];
    }
  }

  double value(double t) const {
    const std::size_t i = interval(t);
    const double h = t_[i + 1] - t_[i];
    const double a = t_[i + 1] - t;
    const double b = t - t_[i];
    return m_[i] * a * a * a / (6.0 * h) + m_[i + 1] * b * b * b / (6.0 * h) +
           (y_[i] / h - m_[i] * h / 6.0) * a +
           (y_[i + 1] / h - m_[i + 1] * h / 6.0) * b;
  }

  double derivative(double t) const {
    const std::size_t i = interval(t);
    const double h = t_[i + 1] - t_[i];
    const double a = t_[i + 1] - t;
    const double b = t - t_[i];
    return -m_[i] * a * a / (2.0 * h) + m_[i + 1] * b * b / (2.0 * h) -
           (y_[i] / h - m_[i] * h / 6.0) + (y_[i + 1] / h - m_[i + 1] * h / 6.0);
  }

 private:
  std::size_t interval(double t) const {
    const auto it = std::upper_bound(t_.begin(), t_.end(), t);
    const auto idx = static_cast<std::ptrdiff_t>(it - t_.begin()) - 1;
    return static_cast<std::size_t>(
        std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(t_.size()) - 2));
  }

  std::vector<double> t_;
  std::vector<double> y_;
  std::vector<double> m_;
};

// Velocity-aligned yaw; held through hover and vertical stretches.
void assign_heading(std::vector<ReferenceSample>& samples) {
  constexpr double kMinHorizontalSpeed = 1e-3;
  std::vector<double> yaw(samples.size(), 0.0);
  std::vector<bool> valid(samples.size(), false);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Vec3& v = samples[i].velocity;
    if (std::hypot(v.x(), v.y()) > kMinHorizontalSpeed) {
      yaw[i] = std::atan2(v.y(), v.x());
      valid[i] = true;
    }
  }
  const auto first = std::find(valid.begin(), valid.end(), true);
  double held = first == valid.end() ? 0.0 : yaw[first - valid.begin()];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (valid[i]) held = yaw[i];
    samples[i].attitude = yaw_quat(held);
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return out;
}

double parse_number(const std::string& cell, std::size_t row, const std::string& col) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != cell.size() || cell.empty()) {
    throw TrajectoryError("row " + std::to_string(row) + ": column '" + col +
                          "' is not a number");
  }
  if (!std::isfinite(v)) {
    throw TrajectoryError("row " + std::to_string(row) + ": column '" + col +
                          "' is not finite");
  }
  return v;
}

std::map<std::string, std::size_t> header_index(const std::string& line,
                                                const std::vector<std::string>& required) {
  const auto names = split_csv(line);
  std::map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < names.size(); ++i) idx[names[i]] = i;
  for (const auto& r : required) {
    if (!idx.contains(r)) throw TrajectoryError("missing column '" + r + "'");
  }
  return idx;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double ReferenceTrajectory::duration() const {
  return samples.empty() ? 0.0 : dt * static_cast<double>(samples.size() - 1);
}

std::size_t ReferenceTrajectory::index_at(double t) const {
  if (samples.empty()) return 0;
  const double raw = std::round(t / dt);
  if (!(raw > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(raw), samples.size() - 1);
}

void ReferenceTrajectory::validate() const {
  if (!(dt > 0.0)) throw TrajectoryError("reference dt must be positive");
  if (samples.empty()) throw TrajectoryError("reference has no samples");
  if (waypoints.size() != waypoint_times.size()) {
    throw TrajectoryError("waypoint and waypoint time counts differ");
  }
  for (std::size_t i = 0; i < waypoint_times.size(); ++i) {
    if (waypoint_times[i] < 0.0 || waypoint_times[i] > duration() + 1e-9) {
      throw TrajectoryError("waypoint time outside the reference");
    }
    if (i > 0 && !(waypoint_times[i] > waypoint_times[i - 1])) {
      throw TrajectoryError("waypoint times must be strictly increasing");
    }
  }
}

ReferenceTrajectory make_circle_track(double radius, int n_waypoints,
                                      double speed, double dt, double altitude,
                                      double accel_limit) {
  if (!(radius > 0.0) || !(speed > 0.0) || !(dt > 0.0) || !(accel_limit > 0.0)) {
    throw TrajectoryError("circle track: radius, speed, dt and accel must be positive");
  }
  if (n_waypoints < 2) throw TrajectoryError("circle track needs at least 2 waypoints");

  const double lap = kTwoPi * radius;
  const Trapezoid profile(lap, speed, accel_limit);

  ReferenceTrajectory ref;
  ref.dt = dt;
  const std::size_t n = sample_count(profile.total_time, dt);
  ref.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = std::min(static_cast<double>(i) * dt, profile.total_time);
    const double theta = profile.distance(t) / radius;
    const double v = profile.speed(t);
    ReferenceSample& s = ref.samples[i];
    s.position = Vec3(radius * std::cos(theta), radius * std::sin(theta), altitude);
    s.velocity = Vec3(-std::sin(theta), std::cos(theta), 0.0) * v;
    s.attitude = yaw_quat(theta + 0.5 * std::numbers::pi);
  }
  for (int k = 1; k <= n_waypoints; ++k) {
    const double s = lap * k / n_waypoints;
    const double theta = s / radius;
    ref.waypoints.emplace_back(radius * std::cos(theta), radius * std::sin(theta), altitude);
    ref.waypoint_times.push_back(profile.time_at(s));
  }
  return ref;
}

std::vector<Vec3> drop_track_points(const TrackSpec& spec) {
  if (spec.ascent_height < 0.0 || spec.descent_height < 0.0 ||
      !(spec.ascent_length > 0.0) || !(spec.descent_length > 0.0) ||
      !(spec.turn_radius > 0.0) || spec.altitude < 0.0) {
    throw TrajectoryError("drop track: invalid geometry");
  }
  if (spec.descent_height > spec.ascent_height + spec.altitude) {
    throw TrajectoryError("drop track: descent exceeds the available height");
  }
  std::vector<Vec3> pts;
  pts.emplace_back(0.0, 0.0, spec.altitude);
  constexpr int kAscent = 5;
  constexpr int kDescent = 2;
  constexpr int kTurn = 5;
  for (int k = 1; k <= kAscent; ++k) {
    const double f = static_cast<double>(k) / kAscent;
    pts.emplace_back(spec.ascent_length * f, 0.0, spec.altitude + spec.ascent_height * f);
  }
  const double top = spec.altitude + spec.ascent_height;
  for (int k = 1; k <= kDescent; ++k) {
    const double f = static_cast<double>(k) / kDescent;
    pts.emplace_back(spec.ascent_length + spec.descent_length * f, 0.0,
                     top - spec.descent_height * f);
  }
  const double x0 = spec.ascent_length + spec.descent_length;
  const double z0 = top - spec.descent_height;
  const double r = spec.turn_radius;
  for (int k = 1; k <= kTurn; ++k) {
    const double phi = -0.5 * std::numbers::pi + std::numbers::pi * k / kTurn;
    pts.emplace_back(x0 + r * std::cos(phi), r + r * std::sin(phi), z0);
  }
  return pts;
}

ReferenceTrajectory make_drop_track(const TrackSpec& spec, double dt) {
  if (spec.kind != TrackKind::Drop) throw TrajectoryError("spec is not a drop track");
  const auto pts = drop_track_points(spec);
  return spline_reference(pts, spec.leg_speeds.empty() ? std::vector<double>{spec.speed}
                                                       : spec.leg_speeds,
                          dt);
}

ReferenceTrajectory spline_reference(const std::vector<Vec3>& points,
                                     const std::vector<double>& speeds, double dt) {
  if (points.size() < 2) throw TrajectoryError("spline needs at least 2 points");
  if (!(dt > 0.0)) throw TrajectoryError("dt must be positive");
  const std::size_t legs = points.size() - 1;
  if (speeds.size() != 1 && speeds.size() != legs) {
    throw TrajectoryError("need one speed or one speed per leg");
  }
  std::vector<double> knots{0.0};
  for (std::size_t i = 0; i < legs; ++i) {
    const double len = (points[i + 1] - points[i]).norm();
    if (len < 1e-9) throw TrajectoryError("duplicate consecutive waypoints");
    const double v = speeds.size() == 1 ? speeds[0] : speeds[i];
    if (!(v > 0.0)) throw TrajectoryError("leg speeds must be positive");
    knots.push_back(knots.back() + len / v);
  }

  std::vector<ClampedSpline> axes;
  for (int a = 0; a < 3; ++a) {
    std::vector<double> vals;
    for (const auto& p : points) vals.push_back(p[a]);
    axes.emplace_back(knots, vals);
  }

  ReferenceTrajectory ref;
  ref.dt = dt;
  const double total = knots.back();
  const std::size_t n = sample_count(total, dt);
  ref.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = std::min(static_cast<double>(i) * dt, total);
    for (int a = 0; a < 3; ++a) {
      ref.samples[i].position[a] = axes[a].value(t);
      ref.samples[i].velocity[a] = axes[a].derivative(t);
    }
  }
  assign_heading(ref.samples);
  for (std::size_t i = 1; i < points.size(); ++i) {
    ref.waypoints.push_back(points[i]);
    ref.waypoint_times.push_back(knots[i]);
  }
  return ref;
}

ReferenceTrajectory make_track(const TrackSpec& spec, double dt) {
  switch (spec.kind) {
    case TrackKind::Circle:
      return make_circle_track(spec.radius, spec.n_waypoints, spec.speed, dt,
                               spec.altitude, spec.accel_limit);
    case TrackKind::Drop:
      return make_drop_track(spec, dt);
    case TrackKind::Custom:
      break;
  }
  throw TrajectoryError("custom tracks are loaded from CSV");
}

std::filesystem::path waypoint_csv_path(const std::filesystem::path& reference) {
  auto p = reference;
  p.replace_filename(reference.stem().string() + "_waypoints.csv");
  return p;
}

std::string reference_csv_text(const ReferenceTrajectory& ref) {
  std::ostringstream out;
  out << "t,x,y,z,qw,qx,qy,qz,vx,vy,vz\n";
  for (std::size_t i = 0; i < ref.samples.size(); ++i) {
    const auto& s = ref.samples[i];
    out << fmt(static_cast<double>(i) * ref.dt) << ',' << fmt(s.position.x()) << ','
        << fmt(s.position.y()) << ',' << fmt(s.position.z()) << ','
        << fmt(s.attitude.w()) << ',' << fmt(s.attitude.x()) << ','
        << fmt(s.attitude.y()) << ',' << fmt(s.attitude.z()) << ','
        << fmt(s.velocity.x()) << ',' << fmt(s.velocity.y()) << ','
        << fmt(s.velocity.z()) << '\n';
  }
  return out.str();
}

std::string waypoints_csv_text(const ReferenceTrajectory& ref) {
  std::ostringstream out;
  out << "x,y,z,t_ref\n";
  for (std::size_t i = 0; i < ref.waypoints.size(); ++i) {
    const auto& w = ref.waypoints[i];
    out << fmt(w.x()) << ',' << fmt(w.y()) << ',' << fmt(w.z()) << ','
        << fmt(ref.waypoint_times[i]) << '\n';
  }
  return out.str();
}

void save_reference_csv(const ReferenceTrajectory& ref, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw TrajectoryError("cannot write " + path.string());
  out << reference_csv_text(ref);
  if (!ref.waypoints.empty()) save_waypoints_csv(ref, waypoint_csv_path(path));
}

namespace {

// Blank lines and `#` comment lines carry no data.
bool skip_line(const std::string& line) {
  const auto first = line.find_first_not_of(" \t\r");
  return first == std::string::npos || line[first] == '#';
}

bool next_content_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!skip_line(line)) return true;
  }
  return false;
}

}  // namespace

ReferenceTrajectory load_reference_csv(const std::filesystem::path& path, bool ned) {
  std::ifstream in(path);
  if (!in) throw TrajectoryError("cannot open " + path.string());
  std::string line;
  if (!next_content_line(in, line)) throw TrajectoryError("empty reference file");
  const std::vector<std::string> cols{"t", "x", "y", "z", "qw", "qx",
                                      "qy", "qz", "vx", "vy", "vz"};
  const auto idx = header_index(line, cols);

  ReferenceTrajectory ref;
  std::vector<double> times;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (skip_line(line)) continue;
    ++row;
    const auto cells = split_csv(line);
    auto get = [&](const std::string& c) {
      const std::size_t i = idx.at(c);
      if (i >= cells.size()) {
        throw TrajectoryError("row " + std::to_string(row) + ": missing column '" + c + "'");
      }
      return parse_number(cells[i], row, c);
    };
    const double t = get("t");
    if (!times.empty() && !(t > times.back())) {
      throw TrajectoryError("row " + std::to_string(row) + ": time is not increasing");
    }
    times.push_back(t);
    ReferenceSample s;
    s.position = Vec3(get("x"), get("y"), get("z"));
    s.attitude = Quat(get("qw"), get("qx"), get("qy"), get("qz"));
    s.velocity = Vec3(get("vx"), get("vy"), get("vz"));
    if (ned) {
      s.position.z() = -s.position.z();
      s.velocity.z() = -s.velocity.z();
      // Conjugation by the z-reflection.
      s.attitude = Quat(s.attitude.w(), -s.attitude.x(), -s.attitude.y(), s.attitude.z());
    }
    ref.samples.push_back(s);
  }
  if (ref.samples.empty()) throw TrajectoryError("reference file has no rows");
  ref.dt = times.size() > 1 ? times[1] - times[0] : 0.005;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double expected = times[0] + static_cast<double>(i) * ref.dt;
    if (std::abs(times[i] - expected) > 1e-6 * std::max(1.0, std::abs(expected))) {
      throw TrajectoryError("row " + std::to_string(i + 1) + ": time is not uniformly sampled");
    }
  }
  const auto wp = waypoint_csv_path(path);
  if (std::filesystem::exists(wp)) load_waypoints_csv(wp, ref, ned);
  ref.validate();
  return ref;
}

void save_waypoints_csv(const ReferenceTrajectory& ref, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw TrajectoryError("cannot write " + path.string());
  out << waypoints_csv_text(ref);
}

void load_waypoints_csv(const std::filesystem::path& path, ReferenceTrajectory& ref, bool ned) {
  std::ifstream in(path);
  if (!in) throw TrajectoryError("cannot open " + path.string());
  std::string line;
  if (!next_content_line(in, line)) throw TrajectoryError("empty waypoint file");
  const auto idx = header_index(line, {"x", "y", "z", "t_ref"});
  ref.waypoints.clear();
  ref.waypoint_times.clear();
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (skip_line(line)) continue;
    ++row;
    const auto cells = split_csv(line);
    auto get = [&](const std::string& c) {
      const std::size_t i = idx.at(c);
      if (i >= cells.size()) {
        throw TrajectoryError("row " + std::to_string(row) + ": missing column '" + c + "'");
      }
      return parse_number(cells[i], row, c);
    };
    Vec3 w(get("x"), get("y"), get("z"));
    if (ned) w.z() = -w.z();
    const double t = get("t_ref");
    if (!ref.waypoint_times.empty() && !(t > ref.waypoint_times.back())) {
      throw TrajectoryError("row " + std::to_string(row) + ": t_ref is not increasing");
    }
    ref.waypoints.push_back(w);
    ref.waypoint_times.push_back(t);
  }
}

std::vector<Vec3> reference_accelerations(const ReferenceTrajectory& ref) {
  const std::size_t n = ref.samples.size();
  std::vector<Vec3> acc(n, Vec3::Zero());
  if (n < 2) return acc;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1;
    const std::size_t hi = i + 1 == n ? n - 1 : i + 1;
    acc[i] = (ref.samples[hi].velocity - ref.samples[lo].velocity) /
             (ref.dt * static_cast<double>(hi - lo));
  }
  return acc;
}

}  // namespace autotune
