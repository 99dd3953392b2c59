#pragma once

// Ground-truth leg motion: a two-segment (thigh, shank) kinematic chain driven
// by generalized coordinates, either synthesized as sway or read from CSV.
//
// Frames: global y is up (gravity along -y), x anterior, z lateral. Segment
// frames have their origin at the proximal joint and their y axis pointing
// proximally, so the distal joint sits at (0, -length, 0). Lengths are meters.
//
// Angle conventions (one convention for every triple):
//   root orientation  R = euler_xyz(root_rx, root_ry, root_rz)
//   hip               R = euler_xyz(hip_add, hip_rot, hip_flex)
//   knee              R = Rz(-knee_flex)   (flexion moves the ankle posteriorly)

#include "imumoco/se3.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace imumoco {

enum class Channel : std::size_t {
  kRootX, kRootY, kRootZ,
  kRootRx, kRootRy, kRootRz,
  kHipFlex, kHipAdd, kHipRot,
  kKneeFlex,
};
inline constexpr std::size_t kNumChannels = 10;
inline constexpr std::array<std::string_view, kNumChannels> kChannelNames = {
    "root_x", "root_y", "root_z", "root_rx", "root_ry", "root_rz",
    "hip_flex", "hip_add", "hip_rot", "knee_flex"};

/// True for channels holding angles (radians internally).
constexpr bool is_angle(Channel c) { return static_cast<std::size_t>(c) >= 3; }

using CoordSample = std::array<double, kNumChannels>;

/// Uniformly sampled generalized coordinates (meters / radians).
struct GeneralizedCoords {
  double sample_rate = 120.0;
  double start_time = 0.0;
  std::vector<CoordSample> samples;

  std::size_t size() const { return samples.size(); }
  double time(std::size_t i) const { return start_time + static_cast<double>(i) / sample_rate; }
  double end_time() const { return samples.empty() ? start_time : time(samples.size() - 1); }
  double& at(std::size_t i, Channel c) { return samples[i][static_cast<std::size_t>(c)]; }
  double at(std::size_t i, Channel c) const { return samples[i][static_cast<std::size_t>(c)]; }
};

/// Throws std::invalid_argument when rate/angle invariants are violated.
void validate(const GeneralizedCoords& coords);

struct SwayChannel {
  double amplitude = 0.0;  // half peak-to-peak; meters or radians
  double frequency = 0.2;  // Hz, base of the harmonic series
  double phase = 0.0;      // radians, added to every harmonic
};

struct SwayParams {
  std::array<SwayChannel, kNumChannels> channels{};
  double squat_knee_flexion = 30.0 * 3.14159265358979323846 / 180.0;  // radians
  Vec3 root_position{0.0, 0.95, 0.0};
  double duration = 10.0;      // s
  double sample_rate = 120.0;  // Hz
  double scan_duration = 248.0 / 31.0;

  SwayChannel& channel(Channel c) { return channels[static_cast<std::size_t>(c)]; }
  const SwayChannel& channel(Channel c) const { return channels[static_cast<std::size_t>(c)]; }
};

/// Static squat posture: knee flexed by `knee_flexion`, thigh inclined by
/// half of it so that thigh and shank lean symmetrically.
CoordSample squat_posture(double knee_flexion, const Vec3& root_position);

/// Seeded sum-of-harmonics sway around the squat posture. Each channel with
/// nonzero amplitude carries 2-4 harmonics of its base frequency (weights
/// 1/h, random phases) rescaled so its peak-to-peak over the generated
/// samples is exactly 2 * amplitude.
GeneralizedCoords generate_sway(const SwayParams& params, std::uint64_t seed);

/// Reads `t,root_x,...,knee_flex`. Angles are radians unless a
/// `# units: m,deg` comment precedes the header. Throws ParseError.
GeneralizedCoords load_coords_csv(const std::filesystem::path& path);
void save_coords_csv(const std::filesystem::path& path, const GeneralizedCoords& coords);

/// Centered moving average per channel. Interior windows hold exactly `span`
/// samples (for even spans one more sample after than before); near the ends
/// the window shrinks symmetrically so output length equals input length.
GeneralizedCoords smooth(const GeneralizedCoords& coords, int span = 60);

/// Linear interpolation of every channel onto the uniform grid
/// start_time + k / rate, k < count. Throws if the grid leaves the sampled range.
GeneralizedCoords resample(const GeneralizedCoords& coords, double start_time, double rate,
                           std::size_t count);

struct Anthropometry {
  double thigh_length = 0.42;
  double shank_length = 0.43;
};

struct SegmentTrajectory {
  double sample_rate = 120.0;
  double start_time = 0.0;
  std::vector<RigidPose> thigh;
  std::vector<RigidPose> shank;
  std::vector<Vec3> hip;
  std::vector<Vec3> knee;
  std::vector<Vec3> ankle;

  std::size_t size() const { return thigh.size(); }
  double time(std::size_t i) const { return start_time + static_cast<double>(i) / sample_rate; }
};

enum class Segment { kThigh, kShank };

const std::vector<RigidPose>& segment_poses(const SegmentTrajectory& traj, Segment s);

SegmentTrajectory forward_kinematics(const GeneralizedCoords& coords,
                                     const Anthropometry& body = {});

}  // namespace imumoco
