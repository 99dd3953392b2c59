#include "imumoco/moco.hpp"

#include "imumoco/io.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace imumoco {

std::vector<Rotation3> gyro_increments(std::span<const ImuSample> samples, double dt,
                                       IntegrationRule rule) {
  if (!(dt > 0.0)) throw std::invalid_argument("gyro_increments: dt must be > 0");
  std::vector<Rotation3> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Vec3 w = samples[i].gyro;
    if (rule == IntegrationRule::kTrapezoid && i + 1 < samples.size()) {
      w = 0.5 * (samples[i].gyro + samples[i + 1].gyro);
    }
    const double rate = w.norm();
    out.push_back(rate == 0.0 ? Rotation3::identity()
                              : rotation_from_axis_angle(w / rate, rate * dt));
  }
  return out;
}

std::vector<Vec3> remove_gravity(std::span<const ImuSample> samples, const RigidPose& s0,
                                 std::span<const Rotation3> increments, const Vec3& gravity) {
  if (increments.size() + 1 < samples.size()) {
    throw std::invalid_argument("remove_gravity: too few rotation increments");
  }
  std::vector<Vec3> out;
  out.reserve(samples.size());
  Rotation3 orientation = s0.rotation();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.push_back(samples[i].accel + orientation.matrix().transpose() * gravity);
    if (i < increments.size()) orientation = orientation * increments[i];
  }
  return out;
}

std::vector<Vec3> integrate_velocity(std::span<const Vec3> gravity_free,
                                     std::span<const Rotation3> increments, const Vec3& v0,
                                     double dt, IntegrationRule rule) {
  const std::size_t n = gravity_free.size();
  if (increments.size() + 1 < n) {
    throw std::invalid_argument("integrate_velocity: too few rotation increments");
  }
  std::vector<Vec3> u;
  u.reserve(n);
  if (n == 0) return u;
  const double dt2 = dt * dt;
  u.push_back(v0 * dt);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const Mat3 gt = increments[i].matrix().transpose();
    if (rule == IntegrationRule::kRectangle) {
      u.push_back(gt * (u[i] + gravity_free[i] * dt2));
    } else {
      u.push_back(gt * (u[i] + 0.5 * gravity_free[i] * dt2) + 0.5 * gravity_free[i + 1] * dt2);
    }
  }
  return u;
}

std::vector<LocalIncrement> make_increments(std::span<const ImuSample> samples,
                                            std::span<const Rotation3> rotations,
                                            std::span<const Vec3> displacements, double dt) {
  if (rotations.size() != samples.size() || displacements.size() != samples.size()) {
    throw std::invalid_argument("make_increments: length mismatch");
  }
  std::vector<LocalIncrement> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out[i] = {rotations[i], displacements[i], samples[i].t, dt};
  }
  return out;
}

std::vector<LocalIncrement> increments_from_poses(std::span<const RigidPose> poses,
                                                  double start_time, double dt) {
  std::vector<LocalIncrement> out;
  if (poses.size() < 2) return out;
  out.reserve(poses.size() - 1);
  for (std::size_t i = 0; i + 1 < poses.size(); ++i) {
    const RigidPose d = poses[i].inverse() * poses[i + 1];
    out.push_back({Rotation3::nearest(d.rotation().matrix()), d.translation(),
                   start_time + static_cast<double>(i) * dt, dt});
  }
  return out;
}

std::vector<LocalIncrement> resample_increments(std::span<const LocalIncrement> increments,
                                                std::span<const double> times) {
  if (increments.empty()) throw std::invalid_argument("resample_increments: no increments");
  if (times.size() < 2) return {};
  const double dt = increments.front().dt;
  const double t0 = increments.front().t;
  const double t_end = increments.back().t + increments.back().dt;
  const double eps = 1e-9 * std::max(1.0, std::abs(t_end));
  if (times.front() < t0 - eps || times.back() > t_end + eps) {
    throw std::out_of_range("resample_increments: CT window [" + std::to_string(times.front()) +
                            ", " + std::to_string(times.back()) +
                            "] s not covered by IMU data [" + std::to_string(t0) + ", " +
                            std::to_string(t_end) + "] s");
  }

  const std::size_t n = increments.size();
  std::vector<Vec3> rot_rate(n);
  std::vector<Vec3> lin_rate(n);
  for (std::size_t i = 0; i < n; ++i) {
    rot_rate[i] = increments[i].rotation.log() / increments[i].dt;
    lin_rate[i] = increments[i].displacement / increments[i].dt;
  }

  std::vector<LocalIncrement> out;
  out.reserve(times.size() - 1);
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    const double span = times[k + 1] - times[k];
    if (!(span > 0.0)) throw std::invalid_argument("resample_increments: times must increase");
    const double mid = 0.5 * (times[k] + times[k + 1]);
    // Rates live at interval midpoints t_i + dt/2.
    const double x = std::clamp((mid - t0) / dt - 0.5, 0.0, static_cast<double>(n - 1));
    const std::size_t i0 = std::min(static_cast<std::size_t>(x), n - 1);
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    const double f = x - static_cast<double>(i0);
    const Vec3 w = (1.0 - f) * rot_rate[i0] + f * rot_rate[i1];
    const Vec3 v = (1.0 - f) * lin_rate[i0] + f * lin_rate[i1];
    out.push_back({rotation_from_vector(w * span), v * span, times[k], span});
  }
  return out;
}

MotionTrack propagate(std::span<const LocalIncrement> increments, const RigidPose& s0,
                      MotionComposition composition) {
  MotionTrack track;
  track.sensor.reserve(increments.size() + 1);
  track.motion.reserve(increments.size() + 1);
  track.times.reserve(increments.size() + 1);

  RigidPose s = s0;
  RigidPose m = RigidPose::identity();
  track.sensor.push_back(s);
  track.motion.push_back(m);
  track.times.push_back(increments.empty() ? 0.0 : increments.front().t);
  for (const auto& inc : increments) {
    const RigidPose global = s * inc.pose() * s.inverse();
    // S_{i+1} = D_g,i S_i reduces to S_i D_l,i; multiplying by the conjugate
    // directly amplifies any orthonormality error threefold per step.
    s = s * inc.pose();
    m = composition == MotionComposition::kRightMultiply ? m * global : global * m;
    track.sensor.push_back(s);
    track.motion.push_back(m);
    track.times.push_back(inc.t + inc.dt);
  }
  return track;
}

namespace {

// Displacement over each interval in the frame at its start. The rectangle
// rule uses u_i as is; the trapezoid rule averages the velocities at both ends.
std::vector<Vec3> interval_displacements(std::span<const Vec3> u,
                                         std::span<const Rotation3> rotations,
                                         IntegrationRule rule) {
  std::vector<Vec3> out(u.begin(), u.end());
  if (rule == IntegrationRule::kTrapezoid) {
    for (std::size_t i = 0; i + 1 < u.size(); ++i) {
      out[i] = 0.5 * (u[i] + rotations[i].matrix() * u[i + 1]);
    }
  }
  return out;
}

}  // namespace

MotionTrack estimate_track(std::span<const ImuSample> samples, const RigidPose& s0,
                           const Vec3& v0, std::span<const double> ct_times,
                           const MocoOptions& options) {
  if (samples.size() < 2) throw std::invalid_argument("estimate_track: need >= 2 IMU samples");
  const double dt = samples[1].t - samples[0].t;
  const auto rotations = gyro_increments(samples, dt, options.rule);
  const auto accel = remove_gravity(samples, s0, rotations, options.gravity);
  const auto u = integrate_velocity(accel, rotations, v0, dt, options.rule);
  const auto displacements = interval_displacements(u, rotations, options.rule);
  const auto increments = make_increments(samples, rotations, displacements, dt);
  const auto ct_increments = resample_increments(increments, ct_times);
  MotionTrack track = propagate(ct_increments, s0, options.composition);
  track.times.assign(ct_times.begin(), ct_times.end());
  return track;
}

void save_track_csv(const std::filesystem::path& path, std::span<const RigidPose> motion,
                    std::string_view units) {
  if (units != "m" && units != "mm") throw std::invalid_argument("save_track_csv: units must be m or mm");
  std::string text = "# units: " + std::string(units) + "\ni";
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) text += ",m" + std::to_string(r) + std::to_string(c);
  }
  text += '\n';
  for (std::size_t i = 0; i < motion.size(); ++i) {
    const Mat4 m = motion[i].matrix();
    text += std::to_string(i);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) text += ',' + io::format_double(m(r, c));
    }
    text += '\n';
  }
  io::write_text(path, text);
}

std::vector<RigidPose> load_track_csv_mm(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  std::string line;
  std::size_t row = 0;
  double scale = 1.0;
  bool header = false;
  std::vector<RigidPose> out;
  while (std::getline(in, line)) {
    ++row;
    const std::string_view view = io::trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      const auto pos = view.find("units:");
      if (pos != std::string_view::npos) {
        const std::string_view u = io::trim(view.substr(pos + 6));
        if (u == "m") scale = 1000.0;
        else if (u == "mm") scale = 1.0;
        else throw ParseError("unknown units '" + std::string(u) + "'", row, 0);
      }
      continue;
    }
    const auto cells = io::split(view, ',');
    if (!header) {
      if (cells.size() != 13 || io::trim(cells[0]) != "i") throw ParseError("bad track header", row, 0);
      header = true;
      continue;
    }
    if (cells.size() != 13) throw ParseError("expected 13 cells", row, 0);
    Mat4 m = Mat4::Identity();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        const std::size_t j = 1 + static_cast<std::size_t>(4 * r + c);
        if (!io::parse_double(cells[j], m(r, c))) throw ParseError("non-numeric cell", row, j + 1);
      }
    }
    try {
      out.push_back(RigidPose::from_matrix(m, 1e-6).scaled_translation(scale));
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), row, 0);
    }
  }
  return out;
}

}  // namespace imumoco
