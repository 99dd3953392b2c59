#include "imumoco/projector.hpp"

#include "imumoco/io.hpp"
#include "imumoco/parallel.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace imumoco {

ProjectionStack::ProjectionStack(std::size_t n_views, std::size_t rows, std::size_t cols)
    : times(n_views, 0.0), n_views_(n_views), rows_(rows), cols_(cols),
      data_(n_views * rows * cols, 0.0f) {}

namespace {

// Detector-space box holding an ellipsoid's shadow, from the corners of its
// oriented bounding box; covers the whole detector if a corner is behind the
// source.
struct PixelBox {
  double u0, u1, v0, v1;
  bool contains(double u, double v) const { return u >= u0 && u <= u1 && v >= v0 && v <= v1; }
};

PixelBox shadow_box(const PosedEllipsoid& e, const ProjectionMatrix& p) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  PixelBox box{kInf, -kInf, kInf, -kInf};
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3 local((corner & 1 ? 1.0 : -1.0) * e.semi_axes().x(), (corner & 2 ? 1.0 : -1.0) * e.semi_axes().y(),
                     (corner & 4 ? 1.0 : -1.0) * e.semi_axes().z());
    const Eigen::Vector3d h = p.matrix() * e.pose().apply(local).homogeneous();
    if (h.z() <= 1e-9) return {-kInf, kInf, -kInf, kInf};
    box.u0 = std::min(box.u0, h.x() / h.z());
    box.u1 = std::max(box.u1, h.x() / h.z());
    box.v0 = std::min(box.v0, h.y() / h.z());
    box.v1 = std::max(box.v1, h.y() / h.z());
  }
  // Sub-rays reach half a pixel beyond the pixel center.
  box.u0 -= 1.0;
  box.u1 += 1.0;
  box.v0 -= 1.0;
  box.v1 += 1.0;
  return box;
}

}  // namespace

std::vector<float> render_view(const PosedPhantom& phantom, const ProjectionMatrix& p,
                               const ScanGeometry& geom, unsigned subsamples) {
  if (subsamples == 0) throw std::invalid_argument("render_view: subsamples must be >= 1");
  std::vector<float> image(geom.rows * geom.cols, 0.0f);
  if (phantom.ellipsoids.empty()) return image;
  const Vec3 source = p.source();
  const Mat3 back = p.matrix().leftCols<3>().inverse();
  std::vector<PixelBox> boxes;
  boxes.reserve(phantom.ellipsoids.size());
  for (const auto& e : phantom.ellipsoids) boxes.push_back(shadow_box(e, p));
  // Sub-ray offsets at the centers of an s x s split of the pixel.
  std::vector<double> offsets(subsamples);
  for (unsigned a = 0; a < subsamples; ++a) offsets[a] = (a + 0.5) / subsamples - 0.5;
  const double inv_count = 1.0 / (subsamples * subsamples);
  std::vector<const PosedEllipsoid*> hit;
  for (std::size_t r = 0; r < geom.rows; ++r) {
    for (std::size_t c = 0; c < geom.cols; ++c) {
      const auto u = static_cast<double>(c);
      const auto v = static_cast<double>(r);
      hit.clear();
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        if (boxes[i].contains(u, v)) hit.push_back(&phantom.ellipsoids[i]);
      }
      if (hit.empty()) continue;
      double sum = 0.0;
      for (double dv : offsets) {
        for (double du : offsets) {
          const Vec3 dir = (back * Vec3(u + du, v + dv, 1.0)).normalized();
          for (const auto* e : hit) sum += e->delta_mu() * e->chord(source, dir);
        }
      }
      image[r * geom.cols + c] = static_cast<float>(std::max(0.0, sum * inv_count));
    }
  }
  return image;
}

ProjectionStack render_scan(const std::vector<Primitive>& primitives, const SegmentTrajectory& traj,
                            const ScanGeometry& geom, bool moving, unsigned workers, unsigned subsamples) {
  const auto matrices = build_trajectory(geom);
  if (traj.size() < (moving ? geom.n_views : 1)) {
    throw std::invalid_argument("render_scan: trajectory has " + std::to_string(traj.size()) +
                                " samples, scan needs " + std::to_string(geom.n_views));
  }
  ProjectionStack stack(geom.n_views, geom.rows, geom.cols);
  stack.oracle.thigh_mm.resize(geom.n_views);
  stack.oracle.shank_mm.resize(geom.n_views);
  for (std::size_t k = 0; k < geom.n_views; ++k) {
    const std::size_t i = moving ? k : 0;
    stack.times[k] = geom.view_time(k);
    stack.oracle.thigh_mm[k] = traj.thigh[i].scaled_translation(1000.0);
    stack.oracle.shank_mm[k] = traj.shank[i].scaled_translation(1000.0);
  }
  parallel_for(geom.n_views, workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const auto phantom = pose_phantom(primitives, stack.oracle.thigh_mm[k], stack.oracle.shank_mm[k]);
      const auto image = render_view(phantom, matrices[k], geom, subsamples);
      std::copy(image.begin(), image.end(), stack.view(k).begin());
    }
  });
  return stack;
}

std::vector<Marker> default_markers() {
  std::vector<Marker> out;
  for (int j = 0; j < 6; ++j) {
    const double a = std::numbers::pi / 3.0 * j;
    const double y = j % 2 == 0 ? -350.0 : -372.0;
    out.push_back({Segment::kThigh, {72.0 * std::cos(a), y, 72.0 * std::sin(a)}});
  }
  for (int j = 0; j < 6; ++j) {
    const double a = std::numbers::pi / 3.0 * (j + 0.5);
    const double y = j % 2 == 0 ? -50.0 : -72.0;
    out.push_back({Segment::kShank, {62.0 * std::cos(a), y, 62.0 * std::sin(a)}});
  }
  return out;
}

std::vector<Vec3> marker_positions(std::span<const Marker> markers, const SegmentTrajectory& traj,
                                   std::size_t index) {
  if (index >= traj.size()) throw std::out_of_range("marker_positions: index out of range");
  const RigidPose thigh = traj.thigh[index].scaled_translation(1000.0);
  const RigidPose shank = traj.shank[index].scaled_translation(1000.0);
  std::vector<Vec3> out;
  out.reserve(markers.size());
  for (const auto& m : markers) {
    out.push_back((m.parent == Segment::kThigh ? thigh : shank).apply(m.position));
  }
  return out;
}

MarkerDetections project_markers(std::span<const Marker> markers, const SegmentTrajectory& traj,
                                 const ScanGeometry& geom, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("project_markers: sigma must be >= 0");
  if (traj.size() < geom.n_views) throw std::invalid_argument("project_markers: trajectory too short");
  const auto matrices = build_trajectory(geom);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MarkerDetections out(geom.n_views);
  for (std::size_t k = 0; k < geom.n_views; ++k) {
    const auto world = marker_positions(markers, traj, k);
    out[k].reserve(world.size());
    for (const auto& x : world) {
      Eigen::Vector2d uv = project_point(matrices[k], x);
      const double nu = normal(rng);
      const double nv = normal(rng);
      if (sigma > 0.0) uv += sigma * Eigen::Vector2d(nu, nv);
      out[k].push_back(uv);
    }
  }
  return out;
}

void save_stack(const std::filesystem::path& base, const ProjectionStack& stack,
                const ScanGeometry& geom) {
  io::write_raw_f32(std::filesystem::path(base).concat(".raw"), stack.data());
  std::string meta;
  meta += "format=float32_le\n";
  meta += "order=view,row,col\n";
  meta += "n_views=" + std::to_string(stack.n_views()) + '\n';
  meta += "rows=" + std::to_string(stack.rows()) + '\n';
  meta += "cols=" + std::to_string(stack.cols()) + '\n';
  meta += "pixel_pitch_mm=" + io::format_double(geom.pixel_pitch) + '\n';
  meta += "geometry_hash=" + geom.hash() + '\n';
  io::write_text(std::filesystem::path(base).concat(".txt"), meta);
}

ProjectionStack load_stack(const std::filesystem::path& base) {
  const auto meta = io::parse_key_values(io::read_text(std::filesystem::path(base).concat(".txt")));
  auto size_key = [&meta](const std::string& key) -> std::size_t {
    const auto it = meta.find(key);
    if (it == meta.end()) throw std::runtime_error("stack sidecar: missing key '" + key + "'");
    return std::stoul(it->second);
  };
  ProjectionStack stack(size_key("n_views"), size_key("rows"), size_key("cols"));
  auto data = io::read_raw_f32(std::filesystem::path(base).concat(".raw"));
  if (data.size() != stack.data().size()) throw std::runtime_error("stack raw size does not match sidecar");
  stack.data() = std::move(data);
  return stack;
}

void save_view_pgm(const std::filesystem::path& path, const ProjectionStack& stack, std::size_t k) {
  if (k >= stack.n_views()) throw std::out_of_range("save_view_pgm: view out of range");
  const auto view = stack.view(k);
  const std::vector<double> pixels(view.begin(), view.end());
  const double hi = pixels.empty() ? 1.0 : *std::max_element(pixels.begin(), pixels.end());
  io::write_pgm16(path, pixels, stack.cols(), stack.rows(), 0.0, hi > 0.0 ? hi : 1.0);
}

}  // namespace imumoco
