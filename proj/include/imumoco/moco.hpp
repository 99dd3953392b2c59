#pragma once

// IMU-driven rigid motion estimation: gyro increments, gravity removal in the
// sensor frame, orientation-aware velocity integration, resampling to the CT
// frame rate and propagation of the global sensor pose into per-view motion
// matrices M_k (M_0 = I).
//
// Units are meters and seconds. Per-sample "velocity" is carried as the
// displacement accrued over one sample interval (u = v * dt), so it can be
// placed directly in the translation slot of an affine increment.

#include "imumoco/imusim.hpp"
#include "imumoco/se3.hpp"

#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace imumoco {

/// Rotation and displacement over [t, t + dt], expressed in the sensor frame
/// at t.
struct LocalIncrement {
  Rotation3 rotation;
  Vec3 displacement = Vec3::Zero();
  double t = 0.0;
  double dt = 0.0;

  RigidPose pose() const { return {rotation, displacement}; }
};

struct MotionTrack {
  std::vector<double> times;
  std::vector<RigidPose> sensor;  // S_k, global frame
  std::vector<RigidPose> motion;  // M_k, M_0 = I
};

/// How a sample is spread over its interval.
///   kRectangle: the sample at t_i holds for the whole of [t_i, t_i+1].
///   kTrapezoid: the interval uses the mean of the samples at both ends.
enum class IntegrationRule { kRectangle, kTrapezoid };

/// How per-step global changes accumulate into M.
///   kRightMultiply: M_{i+1} = M_i * D_i
///   kLeftMultiply:  M_{i+1} = D_i * M_i   (so M_i = S_i S_0^-1 exactly)
enum class MotionComposition { kRightMultiply, kLeftMultiply };

struct MocoOptions {
  IntegrationRule rule = IntegrationRule::kTrapezoid;
  MotionComposition composition = MotionComposition::kLeftMultiply;
  Vec3 gravity = kGravity;
};

/// G_i = exp(w dt) with w the gyro rate over interval i.
std::vector<Rotation3> gyro_increments(std::span<const ImuSample> samples, double dt,
                                       IntegrationRule rule = IntegrationRule::kRectangle);

/// R_{i+1} = R_i G_i from R_0 = S0; returns a_i + R_i^T g.
std::vector<Vec3> remove_gravity(std::span<const ImuSample> samples, const RigidPose& s0,
                                 std::span<const Rotation3> increments,
                                 const Vec3& gravity = kGravity);

/// u_0 = v0 dt; u_{i+1} = G_i^T (u_i + a_i dt^2) for kRectangle. The
/// trapezoid variant splits the acceleration between both interval ends.
std::vector<Vec3> integrate_velocity(std::span<const Vec3> gravity_free,
                                     std::span<const Rotation3> increments, const Vec3& v0,
                                     double dt, IntegrationRule rule = IntegrationRule::kRectangle);

/// Pairs G_i and u_i into increments stamped with the sample times.
std::vector<LocalIncrement> make_increments(std::span<const ImuSample> samples,
                                            std::span<const Rotation3> rotations,
                                            std::span<const Vec3> displacements, double dt);

/// Exact increments between consecutive poses: S_i^-1 S_{i+1}.
std::vector<LocalIncrement> increments_from_poses(std::span<const RigidPose> poses,
                                                  double start_time, double dt);

/// Converts increments to rates, interpolates them linearly at the midpoints
/// of the intervals [times[k], times[k+1]] and rescales by each interval.
/// Throws std::out_of_range if the times leave the increments' coverage.
std::vector<LocalIncrement> resample_increments(std::span<const LocalIncrement> increments,
                                                std::span<const double> times);

/// D_l,i from the increment, D_g,i = S_i D_l,i S_i^-1, S_{i+1} = D_g,i S_i,
/// M per `composition`.
MotionTrack propagate(std::span<const LocalIncrement> increments, const RigidPose& s0,
                      MotionComposition composition = MotionComposition::kRightMultiply);

/// Full chain from raw IMU samples to a motion track at `ct_times`.
/// `samples` must start at the instant where `s0` and `v0` (sensor frame) hold.
MotionTrack estimate_track(std::span<const ImuSample> samples, const RigidPose& s0,
                           const Vec3& v0, std::span<const double> ct_times,
                           const MocoOptions& options = {});

/// One row per view: index followed by the 12 row-major entries of the top
/// 3x4 block. Translations are written in `units` ("m" or "mm").
void save_track_csv(const std::filesystem::path& path, std::span<const RigidPose> motion,
                    std::string_view units);
/// Returns motions with translations in millimeters.
std::vector<RigidPose> load_track_csv_mm(const std::filesystem::path& path);

}  // namespace imumoco
