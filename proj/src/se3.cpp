#include "imumoco/se3.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>

namespace imumoco {

Mat3 skew(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

Vec3 unskew(const Mat3& m, double tol) {
  const Mat3 sym = 0.5 * (m + m.transpose());
  if (sym.cwiseAbs().maxCoeff() > tol) {
    throw std::invalid_argument("unskew: matrix is not antisymmetric (symmetric part " +
                                std::to_string(sym.cwiseAbs().maxCoeff()) + ")");
  }
  const Mat3 a = 0.5 * (m - m.transpose());
  return {a(2, 1), a(0, 2), a(1, 0)};
}

Rotation3 Rotation3::from_matrix(const Mat3& m, double tol) {
  const double ortho = (m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = m.determinant();
  if (!m.allFinite() || ortho > tol || std::abs(det - 1.0) > tol) {
    throw std::invalid_argument("Rotation3: matrix is not a proper rotation");
  }
  Rotation3 r;
  r.m_ = m;
  return r;
}

Rotation3 Rotation3::nearest(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  Rotation3 r;
  r.m_ = u * v.transpose();
  return r;
}

Rotation3 Rotation3::transpose() const {
  Rotation3 r;
  r.m_ = m_.transpose();
  r.chain_ = chain_;
  return r;
}

Rotation3 Rotation3::operator*(const Rotation3& rhs) const {
  Rotation3 r;
  r.m_ = m_ * rhs.m_;
  r.chain_ = std::max(chain_, rhs.chain_) + 1;
  if (r.chain_ >= kRenormalizeEvery) {
    r = nearest(r.m_);
  }
  return r;
}

Vec3 Rotation3::log() const {
  const Eigen::AngleAxisd aa(m_);
  return aa.axis() * aa.angle();
}

Rotation3 rotation_from_axis_angle(const Vec3& axis, double angle) {
  if (angle == 0.0) return Rotation3::identity();
  const double n = axis.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw std::invalid_argument("rotation_from_axis_angle: zero axis with nonzero angle");
  }
  const Vec3 k = axis / n;
  const Mat3 kx = skew(k);
  const Mat3 m = Mat3::Identity() + std::sin(angle) * kx + (1.0 - std::cos(angle)) * kx * kx;
  return Rotation3::from_matrix(m, 1e-9);
}

Rotation3 rotation_from_vector(const Vec3& rotvec) {
  const double angle = rotvec.norm();
  if (angle == 0.0) return Rotation3::identity();
  return rotation_from_axis_angle(rotvec / angle, angle);
}

Rotation3 rotation_from_euler_xyz(const Vec3& angles) {
  const Mat3 m = (Eigen::AngleAxisd(angles.x(), Vec3::UnitX()) *
                  Eigen::AngleAxisd(angles.y(), Vec3::UnitY()) *
                  Eigen::AngleAxisd(angles.z(), Vec3::UnitZ()))
                     .toRotationMatrix();
  return Rotation3::from_matrix(m, 1e-9);
}

RigidPose RigidPose::from_matrix(const Mat4& m, double tol) {
  if (std::abs(m(3, 0)) > tol || std::abs(m(3, 1)) > tol || std::abs(m(3, 2)) > tol ||
      std::abs(m(3, 3) - 1.0) > tol) {
    throw std::invalid_argument("RigidPose: last row must be (0,0,0,1)");
  }
  return {Rotation3::from_matrix(m.topLeftCorner<3, 3>(), tol), m.topRightCorner<3, 1>()};
}

RigidPose RigidPose::inverse() const {
  const Rotation3 rt = rotation_.transpose();
  return {rt, -(rt * translation_)};
}

Mat4 RigidPose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_.matrix();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

RigidPose compose(const RigidPose& a, const RigidPose& b) {
  return {a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation()};
}

double rotation_angle(const Rotation3& r) {
  return Eigen::AngleAxisd(r.matrix()).angle();
}

}  // namespace imumoco
