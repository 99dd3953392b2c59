#pragma once

// Rigid transforms and small-matrix helpers shared by every stage of the
// simulation. Rotations are explicit 3x3 matrices; angles are radians.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <stdexcept>

namespace imumoco {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Antisymmetric cross-product matrix: skew(w) * v == w.cross(v).
Mat3 skew(const Vec3& w);

/// Inverse of skew(). The input is symmetrized as (M - M^T)/2 first; throws
/// std::invalid_argument if the symmetric part exceeds `tol`.
Vec3 unskew(const Mat3& m, double tol = 1e-6);

/// Orthonormal 3x3 matrix with det = +1.
///
/// Every composition increments a chain counter; once the chain is
/// kRenormalizeEvery long the matrix is projected back onto SO(3) (polar
/// decomposition) and the counter restarts.
class Rotation3 {
public:
  static constexpr std::uint32_t kRenormalizeEvery = 1000;

  Rotation3() : m_(Mat3::Identity()) {}

  /// Wraps `m`; throws if it is not orthonormal with det +1 within `tol`.
  static Rotation3 from_matrix(const Mat3& m, double tol = 1e-6);
  /// Nearest rotation to `m` in the Frobenius sense.
  static Rotation3 nearest(const Mat3& m);
  static Rotation3 identity() { return {}; }

  const Mat3& matrix() const { return m_; }
  Rotation3 transpose() const;
  Rotation3 operator*(const Rotation3& rhs) const;
  Vec3 operator*(const Vec3& v) const { return m_ * v; }

  /// Rotation vector (axis * angle), angle in [0, pi].
  Vec3 log() const;

  std::uint32_t chain_length() const { return chain_; }

private:
  Mat3 m_;
  std::uint32_t chain_ = 0;
};

/// Rodrigues rotation. A zero angle yields identity for any axis; a zero axis
/// with nonzero angle throws std::invalid_argument.
Rotation3 rotation_from_axis_angle(const Vec3& axis, double angle);

/// exp map of a rotation vector.
Rotation3 rotation_from_vector(const Vec3& rotvec);

/// Intrinsic X-Y-Z Euler angles: R = Rx(a) * Ry(b) * Rz(c).
Rotation3 rotation_from_euler_xyz(const Vec3& angles);

/// Homogeneous rigid transform x -> R x + t.
class RigidPose {
public:
  RigidPose() = default;
  RigidPose(const Rotation3& r, const Vec3& t) : rotation_(r), translation_(t) {}

  static RigidPose identity() { return {}; }
  static RigidPose from_translation(const Vec3& t) { return {Rotation3{}, t}; }
  static RigidPose from_rotation(const Rotation3& r) { return {r, Vec3::Zero()}; }
  /// Throws if the last row is not (0,0,0,1) or the block is not a rotation.
  static RigidPose from_matrix(const Mat4& m, double tol = 1e-6);

  const Rotation3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 apply(const Vec3& x) const { return rotation_ * x + translation_; }
  RigidPose inverse() const;
  Mat4 matrix() const;
  /// Same pose with translation multiplied by `s` (unit conversion).
  RigidPose scaled_translation(double s) const { return {rotation_, translation_ * s}; }

private:
  Rotation3 rotation_;
  Vec3 translation_ = Vec3::Zero();
};

/// compose(a, b) == a * b as 4x4 matrices: apply b first, then a.
RigidPose compose(const RigidPose& a, const RigidPose& b);
inline RigidPose operator*(const RigidPose& a, const RigidPose& b) { return compose(a, b); }

/// Rotation angle of R in radians.
double rotation_angle(const Rotation3& r);

}  // namespace imumoco
