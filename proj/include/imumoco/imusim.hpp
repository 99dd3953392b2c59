#pragma once

// Strap-down accelerometer/gyroscope synthesis for a sensor rigidly mounted
// on a leg segment. Derivatives of the sampled poses are taken with
// second-order finite differences: central in the interior, one-sided
// three/four-point stencils at the two ends.

#include "imumoco/motion.hpp"
#include "imumoco/se3.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace imumoco {

inline constexpr double kStandardGravity = 9.80665;
inline const Vec3 kGravity{0.0, -kStandardGravity, 0.0};

struct SensorMount {
  Segment parent = Segment::kShank;
  Vec3 position{0.0, -0.14, 0.0};  // meters, segment frame
  Rotation3 orientation;           // sensor axes in segment frame
};

struct ImuSample {
  double t = 0.0;
  Vec3 accel = Vec3::Zero();  // m/s^2, sensor frame, includes gravity reaction
  Vec3 gyro = Vec3::Zero();   // rad/s, sensor frame
};

struct ImuErrorModel {
  double accel_sigma = 0.0;  // m/s^2
  double gyro_sigma = 0.0;   // rad/s
  Vec3 accel_bias = Vec3::Zero();
  Vec3 gyro_bias = Vec3::Zero();
  std::uint64_t seed = 0;
};

/// pose_i = segment_pose_i * (orientation, position).
std::vector<RigidPose> sensor_world_poses(const SegmentTrajectory& traj, const SensorMount& mount);

/// a_i = R_i^T (r_seg'' + R_seg'' p - g), [w_i]x = R_i^T R_i'. Needs >= 5 samples.
std::vector<ImuSample> simulate_imu(const SegmentTrajectory& traj, const SensorMount& mount,
                                    const Vec3& gravity = kGravity);

/// Adds seeded white noise and constant bias.
std::vector<ImuSample> corrupt(const std::vector<ImuSample>& samples, const ImuErrorModel& model);

void save_imu_csv(const std::filesystem::path& path, const std::vector<ImuSample>& samples);
std::vector<ImuSample> load_imu_csv(const std::filesystem::path& path);

/// Sensor velocity at sample `index`, expressed in the sensor frame (m/s).
Vec3 sensor_velocity(const std::vector<RigidPose>& sensor_poses, double sample_rate,
                     std::size_t index);

}  // namespace imumoco
