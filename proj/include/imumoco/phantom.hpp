#pragma once

// Analytic two-segment leg phantom built from ellipsoids with additive
// attenuation. Geometry is in millimeters in the parent segment's frame;
// attenuation in 1/mm, so line integrals are dimensionless.

#include "imumoco/motion.hpp"
#include "imumoco/se3.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace imumoco {

struct Primitive {
  std::string name;
  Segment parent = Segment::kThigh;
  Vec3 center = Vec3::Zero();     // mm, segment frame
  Vec3 semi_axes = Vec3::Ones();  // mm, along the primitive's own axes
  Rotation3 orientation;          // primitive axes in the segment frame
  double delta_mu = 0.0;          // 1/mm, added to whatever it overlaps
};

/// Throws std::invalid_argument on non-positive or non-finite semi-axes.
void validate(const Primitive& p);

/// Ellipsoid placed in the world, with the inverse transform cached.
class PosedEllipsoid {
public:
  PosedEllipsoid(const RigidPose& world_from_local, const Vec3& semi_axes, double delta_mu);

  const RigidPose& pose() const { return pose_; }
  const Vec3& semi_axes() const { return semi_; }
  double delta_mu() const { return delta_mu_; }
  Vec3 center() const { return pose_.translation(); }

  /// Length of the ray {origin + t dir, t >= 0} inside the ellipsoid.
  double chord(const Vec3& origin, const Vec3& dir) const;
  bool contains(const Vec3& x) const;

private:
  RigidPose pose_;
  Mat3 to_unit_;  // world direction -> unit-sphere coordinates
  Vec3 semi_;
  double delta_mu_;
};

struct PosedPhantom {
  std::vector<PosedEllipsoid> ellipsoids;
  std::vector<std::string> names;
};

/// Left-leg phantom: soft tissue per segment, femur with condyles and marrow,
/// patella, tibia with plateau and marrow, fibula. Segment frames follow the
/// forward kinematics (origin at the proximal joint, +y proximal).
std::vector<Primitive> default_leg_phantom();

/// Places primitives with explicit segment poses (translations in mm).
PosedPhantom pose_phantom(const std::vector<Primitive>& primitives, const RigidPose& thigh_mm,
                          const RigidPose& shank_mm);

/// Places primitives with the segment poses of sample `index`; the
/// trajectory is in meters. Throws std::out_of_range for a bad index.
PosedPhantom pose_at(const std::vector<Primitive>& primitives, const SegmentTrajectory& traj,
                     std::size_t index);

/// Sum over ellipsoids of delta_mu times chord length. `dir` must be unit.
double line_integral(const PosedPhantom& phantom, const Vec3& origin, const Vec3& dir);

/// Point attenuation (sum of deltas of all ellipsoids containing x).
double attenuation_at(const PosedPhantom& phantom, const Vec3& x);

/// One primitive per non-comment line:
///   name parent cx cy cz ax ay az rx ry rz delta_mu
/// parent is "thigh" or "shank"; rx ry rz are xyz Euler angles in degrees.
std::vector<Primitive> parse_phantom(std::string_view text);
std::vector<Primitive> load_phantom(const std::filesystem::path& path);
std::string format_phantom(const std::vector<Primitive>& primitives);

}  // namespace imumoco
