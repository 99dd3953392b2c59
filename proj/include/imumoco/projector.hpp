#pragma once

// Forward projection of the posed phantom and fiducial marker detections.

#include "imumoco/geometry.hpp"
#include "imumoco/phantom.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace imumoco {

/// Line-integral images, view-major then row-major: value(k, r, c).
class ProjectionStack {
public:
  ProjectionStack() = default;
  ProjectionStack(std::size_t n_views, std::size_t rows, std::size_t cols);

  std::size_t n_views() const { return n_views_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t view_size() const { return rows_ * cols_; }

  float& at(std::size_t k, std::size_t r, std::size_t c) { return data_[(k * rows_ + r) * cols_ + c]; }
  float at(std::size_t k, std::size_t r, std::size_t c) const { return data_[(k * rows_ + r) * cols_ + c]; }
  std::span<float> view(std::size_t k) { return {data_.data() + k * view_size(), view_size()}; }
  std::span<const float> view(std::size_t k) const { return {data_.data() + k * view_size(), view_size()}; }
  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  std::vector<double> times;  // s, one per view

  /// Ground truth for tests and oracles only; never read by reconstruction.
  struct Oracle {
    std::vector<RigidPose> thigh_mm;
    std::vector<RigidPose> shank_mm;
  } oracle;

private:
  std::size_t n_views_ = 0;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

/// Pixel value is the phantom's line integral from the matrix's source,
/// averaged over subsamples x subsamples rays spread evenly across the pixel
/// (1 = a single ray through the pixel center).
std::vector<float> render_view(const PosedPhantom& phantom, const ProjectionMatrix& p,
                               const ScanGeometry& geom, unsigned subsamples = 1);

/// `traj` holds segment poses at the view instants (sample k = view k).
/// With `moving` false every view uses sample 0. Views render in parallel.
ProjectionStack render_scan(const std::vector<Primitive>& primitives, const SegmentTrajectory& traj,
                            const ScanGeometry& geom, bool moving, unsigned workers = 0,
                            unsigned subsamples = 1);

struct Marker {
  Segment parent = Segment::kThigh;
  Vec3 position = Vec3::Zero();  // mm, segment frame
};

/// Twelve skin markers around the knee: a ring of six on the distal thigh
/// and six on the proximal shank, staggered in height.
std::vector<Marker> default_markers();

/// Marker world positions (mm) at trajectory sample `index`.
std::vector<Vec3> marker_positions(std::span<const Marker> markers, const SegmentTrajectory& traj,
                                   std::size_t index);

/// detections[k][j]: detector position of marker j in view k.
using MarkerDetections = std::vector<std::vector<Eigen::Vector2d>>;

/// Exact projections plus seeded N(0, sigma^2) pixel noise on each coordinate.
/// Throws std::domain_error if a marker lies at or behind the source plane.
MarkerDetections project_markers(std::span<const Marker> markers, const SegmentTrajectory& traj,
                                 const ScanGeometry& geom, double sigma, std::uint64_t seed);

/// Writes <base>.raw (float32 LE) and <base>.txt (dims, pitch, geometry hash).
void save_stack(const std::filesystem::path& base, const ProjectionStack& stack,
                const ScanGeometry& geom);
ProjectionStack load_stack(const std::filesystem::path& base);
/// 16-bit graymap of view k scaled from [0, max of the view].
void save_view_pgm(const std::filesystem::path& path, const ProjectionStack& stack, std::size_t k);

}  // namespace imumoco
