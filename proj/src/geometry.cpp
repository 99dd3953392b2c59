#include "imumoco/geometry.hpp"

#include "imumoco/io.hpp"

#include <Eigen/LU>

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace imumoco {

ScanGeometry ScanGeometry::full() { return {}; }

ScanGeometry ScanGeometry::desk() {
  ScanGeometry g;
  g.cols = 310;
  g.rows = 240;
  g.pixel_pitch = 1.232;
  g.n_views = 248;
  g.angular_step_deg = 0.8;
  g.frame_rate = 31.0;
  return g;
}

ScanGeometry ScanGeometry::tiny() {
  ScanGeometry g;
  g.cols = 155;
  g.rows = 120;
  g.pixel_pitch = 2.464;
  g.n_views = 62;
  g.angular_step_deg = 3.2;
  g.frame_rate = 7.75;
  return g;
}

double ScanGeometry::view_angle(std::size_t k) const {
  return (start_angle_deg + angular_step_deg * static_cast<double>(k)) * std::numbers::pi / 180.0;
}

double ScanGeometry::view_time(std::size_t k) const {
  return static_cast<double>(k) / frame_rate;
}

double ScanGeometry::half_fan_angle() const {
  return std::atan(0.5 * static_cast<double>(cols) * pixel_pitch / sdd);
}

std::string ScanGeometry::describe() const {
  std::ostringstream ss;
  ss << "sdd=" << io::format_double(sdd) << "\nsid=" << io::format_double(sid)
     << "\ncols=" << cols << "\nrows=" << rows << "\npixel_pitch=" << io::format_double(pixel_pitch)
     << "\nn_views=" << n_views << "\nangular_step_deg=" << io::format_double(angular_step_deg)
     << "\nframe_rate=" << io::format_double(frame_rate)
     << "\nstart_angle_deg=" << io::format_double(start_angle_deg)
     << "\nisocenter=" << io::format_double(isocenter.x()) << ',' << io::format_double(isocenter.y())
     << ',' << io::format_double(isocenter.z()) << '\n';
  return ss.str();
}

std::string ScanGeometry::hash() const { return io::sha256_hex(describe()).substr(0, 16); }

void validate(const ScanGeometry& g) {
  if (!(g.sid > 0.0) || !(g.sdd > g.sid)) throw std::invalid_argument("geometry: need sdd > sid > 0");
  if (!(g.pixel_pitch > 0.0)) throw std::invalid_argument("geometry: pixel pitch must be > 0");
  if (g.n_views < 1 || g.cols < 2 || g.rows < 1) throw std::invalid_argument("geometry: empty detector or schedule");
  if (!(g.frame_rate > 0.0)) throw std::invalid_argument("geometry: frame rate must be > 0");
}

ProjectionMatrix::ProjectionMatrix(const Matrix& m, const Vec3& reference) {
  const double n = m.block<1, 3>(2, 0).norm();
  if (!(n > 0.0)) throw std::invalid_argument("ProjectionMatrix: degenerate third row");
  m_ = m / n;
  const double w = m_.block<1, 3>(2, 0).dot(reference) + m_(2, 3);
  if (w < 0.0) m_ = -m_;
}

Vec3 ProjectionMatrix::source() const {
  const Mat3 a = m_.leftCols<3>();
  return -a.inverse() * m_.col(3);
}

Vec3 ProjectionMatrix::ray_direction(double u, double v) const {
  const Mat3 a = m_.leftCols<3>();
  return (a.inverse() * Vec3(u, v, 1.0)).normalized();
}

ViewParts view_parts(const ScanGeometry& geom, std::size_t k) {
  const double theta = geom.view_angle(k);
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  ViewParts parts;
  const double f = geom.sdd / geom.pixel_pitch;
  parts.intrinsics << f, 0.0, geom.u_center(),
                      0.0, f, geom.v_center(),
                      0.0, 0.0, 1.0;
  parts.rotation << s, 0.0, -c,
                    0.0, -1.0, 0.0,
                    -c, 0.0, -s;
  parts.source = geom.isocenter + geom.sid * Vec3(c, 0.0, s);
  return parts;
}

std::vector<ProjectionMatrix> build_trajectory(const ScanGeometry& geom) {
  validate(geom);
  std::vector<ProjectionMatrix> out;
  out.reserve(geom.n_views);
  for (std::size_t k = 0; k < geom.n_views; ++k) {
    const ViewParts parts = view_parts(geom, k);
    ProjectionMatrix::Matrix ext;
    ext.leftCols<3>() = parts.rotation;
    ext.col(3) = -parts.rotation * parts.source;
    out.emplace_back(parts.intrinsics * ext, geom.isocenter);
  }
  return out;
}

Eigen::Vector2d project_point(const ProjectionMatrix::Matrix& p, const Vec3& x) {
  const Eigen::Vector3d h = p.leftCols<3>() * x + p.col(3);
  if (h.z() < 1e-12) throw std::domain_error("project_point: point at or behind the source plane");
  return {h.x() / h.z(), h.y() / h.z()};
}

Eigen::Vector2d project_point(const ProjectionMatrix& p, const Vec3& x) {
  return project_point(p.matrix(), x);
}

ProjectionMatrix apply_motion(const ProjectionMatrix& p, const RigidPose& motion) {
  const Eigen::Matrix4d m = motion.matrix();
  return {ProjectionMatrix::Matrix(p.matrix() * m), ProjectionMatrix::Unnormalized{}};
}

void save_matrices_csv(const std::filesystem::path& path, std::span<const ProjectionMatrix> mats) {
  std::string text = "view";
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) text += ",p" + std::to_string(r) + std::to_string(c);
  }
  text += '\n';
  for (std::size_t k = 0; k < mats.size(); ++k) {
    text += std::to_string(k);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) text += ',' + io::format_double(mats[k].matrix()(r, c));
    }
    text += '\n';
  }
  io::write_text(path, text);
}

}  // namespace imumoco
