#pragma once

// Circular cone-beam trajectory and per-view projection matrices.
//
// World units are millimeters. The source circles the vertical (y) axis
// through the isocenter: at view angle theta it sits at
// iso + sid * (cos theta, 0, sin theta). The flat detector's u axis follows
// the detector's direction of travel, its v axis points down (-y), and pixel
// (c, r) has its center at detector coordinates (c, r). The principal point
// is the detector center.

#include "imumoco/se3.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace imumoco {

struct ScanGeometry {
  double sdd = 1198.0;        // source-detector distance, mm
  double sid = 780.0;         // source-isocenter distance, mm
  std::size_t cols = 620;
  std::size_t rows = 480;
  double pixel_pitch = 0.616;  // mm, isotropic
  std::size_t n_views = 248;
  double angular_step_deg = 0.8;
  double frame_rate = 31.0;    // Hz
  double start_angle_deg = 0.0;
  Vec3 isocenter = Vec3::Zero();  // mm, world frame

  /// Detector and schedule from the acquisition protocol: 620x480 at 0.616 mm,
  /// 248 views at 0.8 deg, 31 Hz.
  static ScanGeometry full();
  /// Same physical detector at half the pixel sampling (310x240 at 1.232 mm)
  /// with the full view schedule. Halving the views as well leaves view
  /// aliasing that moves with the object and masks motion-correction results.
  static ScanGeometry desk();
  /// Quarter sampling for quick runs: 155x120 at 2.464 mm, 62 views at 3.2 deg.
  static ScanGeometry tiny();

  double view_angle(std::size_t k) const;  // radians
  double view_time(std::size_t k) const;   // seconds after the first view
  double duration() const { return static_cast<double>(n_views) / frame_rate; }
  double u_center() const { return 0.5 * static_cast<double>(cols - 1); }
  double v_center() const { return 0.5 * static_cast<double>(rows - 1); }
  double magnification() const { return sdd / sid; }
  /// Half fan angle subtended by the detector width.
  double half_fan_angle() const;

  /// Stable text form used for hashing and sidecars.
  std::string describe() const;
  std::string hash() const;
};

/// Throws std::invalid_argument unless sdd > sid > 0, pitch > 0, n_views >= 1.
void validate(const ScanGeometry& geom);

/// 3x4 homogeneous world -> detector map, normalized so that the third row's
/// left block has unit norm. With that scale the homogeneous weight of a
/// point is its depth (mm) along the principal ray.
class ProjectionMatrix {
public:
  using Matrix = Eigen::Matrix<double, 3, 4>;

  ProjectionMatrix() : m_(Matrix::Zero()) {}
  /// Rescales `m` to the normalized form; the sign is chosen so that
  /// `reference` gets a positive weight.
  ProjectionMatrix(const Matrix& m, const Vec3& reference);

  const Matrix& matrix() const { return m_; }
  /// Camera center (null space of the matrix).
  Vec3 source() const;
  /// Unit direction from the source through detector point (u, v).
  Vec3 ray_direction(double u, double v) const;

private:
  struct Unnormalized {};
  ProjectionMatrix(const Matrix& m, Unnormalized) : m_(m) {}
  friend ProjectionMatrix apply_motion(const ProjectionMatrix& p, const RigidPose& motion);

  Matrix m_;
};

struct ViewParts {
  Mat3 intrinsics;
  Mat3 rotation;      // world -> camera
  Vec3 source;        // world position, mm
};

/// Intrinsics/extrinsics for view k, the pieces build_trajectory multiplies.
ViewParts view_parts(const ScanGeometry& geom, std::size_t k);

std::vector<ProjectionMatrix> build_trajectory(const ScanGeometry& geom);

/// Detector coordinates of world point `x`; throws std::domain_error if the
/// homogeneous weight is below 1e-12 (point at or behind the source plane).
Eigen::Vector2d project_point(const ProjectionMatrix& p, const Vec3& x);
Eigen::Vector2d project_point(const ProjectionMatrix::Matrix& p, const Vec3& x);

/// P * M. `motion` (mm) maps reference-frame coordinates to where that
/// material sits at this view, so apply_motion(P, M) x == P (M x).
ProjectionMatrix apply_motion(const ProjectionMatrix& p, const RigidPose& motion);

void save_matrices_csv(const std::filesystem::path& path, std::span<const ProjectionMatrix> mats);

}  // namespace imumoco
