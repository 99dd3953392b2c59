#include "imumoco/imusim.hpp"

#include "imumoco/io.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace imumoco {
namespace {

// Second-order accurate derivative stencils on a uniform grid. T is any type
// supporting +, - and scalar *.
template <typename T, typename Get>
T first_derivative(Get f, std::size_t i, std::size_t n, double dt) {
  if (i == 0) return (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * dt);
  if (i == n - 1) return (3.0 * f(n - 1) - 4.0 * f(n - 2) + f(n - 3)) / (2.0 * dt);
  return (f(i + 1) - f(i - 1)) / (2.0 * dt);
}

template <typename T, typename Get>
T second_derivative(Get f, std::size_t i, std::size_t n, double dt) {
  const double inv = 1.0 / (dt * dt);
  if (i == 0) return (2.0 * f(0) - 5.0 * f(1) + 4.0 * f(2) - f(3)) * inv;
  if (i == n - 1) return (2.0 * f(n - 1) - 5.0 * f(n - 2) + 4.0 * f(n - 3) - f(n - 4)) * inv;
  return (f(i + 1) - 2.0 * f(i) + f(i - 1)) * inv;
}

}  // namespace

std::vector<RigidPose> sensor_world_poses(const SegmentTrajectory& traj, const SensorMount& mount) {
  const RigidPose local(mount.orientation, mount.position);
  const auto& seg = segment_poses(traj, mount.parent);
  std::vector<RigidPose> out;
  out.reserve(seg.size());
  for (const auto& p : seg) out.push_back(p * local);
  return out;
}

std::vector<ImuSample> simulate_imu(const SegmentTrajectory& traj, const SensorMount& mount,
                                    const Vec3& gravity) {
  const std::size_t n = traj.size();
  if (n < 5) throw std::invalid_argument("simulate_imu: need at least 5 trajectory samples");
  const double dt = 1.0 / traj.sample_rate;
  const auto& seg = segment_poses(traj, mount.parent);

  auto seg_position = [&seg](std::size_t i) -> Vec3 { return seg[i].translation(); };
  auto seg_rotation = [&seg](std::size_t i) -> Mat3 { return seg[i].rotation().matrix(); };
  const Mat3& mount_r = mount.orientation.matrix();
  auto sensor_rotation = [&seg, &mount_r](std::size_t i) -> Mat3 {
    return seg[i].rotation().matrix() * mount_r;
  };

  std::vector<ImuSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Mat3 r = sensor_rotation(i);
    const Vec3 r_dd = second_derivative<Vec3>(seg_position, i, n, dt);
    const Mat3 rot_dd = second_derivative<Mat3>(seg_rotation, i, n, dt);
    const Mat3 r_dot = first_derivative<Mat3>(sensor_rotation, i, n, dt);

    const Mat3 omega_x = r.transpose() * r_dot;
    out[i].t = traj.time(i);
    out[i].accel = r.transpose() * (r_dd + rot_dd * mount.position - gravity);
    out[i].gyro = unskew(omega_x, 1e-3 * std::max(1.0, omega_x.cwiseAbs().maxCoeff()));
  }
  return out;
}

std::vector<ImuSample> corrupt(const std::vector<ImuSample>& samples, const ImuErrorModel& model) {
  if (model.accel_sigma < 0.0 || model.gyro_sigma < 0.0) {
    throw std::invalid_argument("corrupt: noise sigma must be >= 0");
  }
  std::mt19937_64 rng(model.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ImuSample> out = samples;
  for (auto& s : out) {
    Vec3 na;
    Vec3 ng;
    for (int k = 0; k < 3; ++k) na[k] = normal(rng);
    for (int k = 0; k < 3; ++k) ng[k] = normal(rng);
    s.accel += model.accel_bias;
    s.gyro += model.gyro_bias;
    if (model.accel_sigma > 0.0) s.accel += model.accel_sigma * na;
    if (model.gyro_sigma > 0.0) s.gyro += model.gyro_sigma * ng;
  }
  return out;
}

void save_imu_csv(const std::filesystem::path& path, const std::vector<ImuSample>& samples) {
  std::string text = "t,ax,ay,az,wx,wy,wz\n";
  for (const auto& s : samples) {
    text += io::format_double(s.t);
    for (int k = 0; k < 3; ++k) text += ',' + io::format_double(s.accel[k]);
    for (int k = 0; k < 3; ++k) text += ',' + io::format_double(s.gyro[k]);
    text += '\n';
  }
  io::write_text(path, text);
}

std::vector<ImuSample> load_imu_csv(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  std::string line;
  std::size_t row = 0;
  bool header = false;
  std::vector<ImuSample> out;
  while (std::getline(in, line)) {
    ++row;
    const std::string_view view = io::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto cells = io::split(view, ',');
    if (!header) {
      if (cells.size() != 7 || io::trim(cells[0]) != "t") {
        throw ParseError("expected header t,ax,ay,az,wx,wy,wz", row, 0);
      }
      header = true;
      continue;
    }
    if (cells.size() != 7) throw ParseError("expected 7 cells", row, 0);
    double v[7];
    for (std::size_t j = 0; j < 7; ++j) {
      if (!io::parse_double(cells[j], v[j])) throw ParseError("non-numeric cell", row, j + 1);
    }
    ImuSample s;
    s.t = v[0];
    s.accel = Vec3(v[1], v[2], v[3]);
    s.gyro = Vec3(v[4], v[5], v[6]);
    if (!out.empty() && !(s.t > out.back().t)) throw ParseError("timestamps not increasing", row, 1);
    out.push_back(s);
  }
  return out;
}

Vec3 sensor_velocity(const std::vector<RigidPose>& sensor_poses, double sample_rate,
                     std::size_t index) {
  const std::size_t n = sensor_poses.size();
  if (n < 3 || index >= n) throw std::out_of_range("sensor_velocity: index out of range");
  auto pos = [&sensor_poses](std::size_t i) -> Vec3 { return sensor_poses[i].translation(); };
  const Vec3 v_world = first_derivative<Vec3>(pos, index, n, 1.0 / sample_rate);
  return sensor_poses[index].rotation().matrix().transpose() * v_world;
}

}  // namespace imumoco
