#pragma once

// Feldkamp-type filtered backprojection with arbitrary per-view projection
// matrices: cosine preweighting, short-scan redundancy weighting, row-wise
// ramp filtering and voxel-driven, distance-weighted backprojection.

#include "imumoco/geometry.hpp"
#include "imumoco/projector.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace imumoco {

struct VolumeSpec {
  std::size_t n = 128;     // voxels per axis
  double spacing = 2.0;    // mm
  Vec3 center = Vec3::Zero();

  static VolumeSpec desk(const Vec3& center) { return {128, 2.0, center}; }
  static VolumeSpec full(const Vec3& center) { return {512, 0.5, center}; }
};

/// Cubic grid, x fastest then y then z. Voxel (i, j, k) has its center at
/// origin + spacing * (i, j, k).
class VoxelVolume {
public:
  VoxelVolume() = default;
  explicit VoxelVolume(const VolumeSpec& spec);
  VoxelVolume(std::size_t n, double spacing, const Vec3& origin);

  std::size_t n() const { return n_; }
  std::size_t size() const { return values_.size(); }
  double spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }
  Vec3 position(std::size_t i, std::size_t j, std::size_t k) const {
    return origin_ + spacing_ * Vec3(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
  }
  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return (k * n_ + j) * n_ + i; }
  double& at(std::size_t i, std::size_t j, std::size_t k) { return values_[index(i, j, k)]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const { return values_[index(i, j, k)]; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  bool same_grid(const VoxelVolume& other) const;

private:
  std::size_t n_ = 0;
  double spacing_ = 1.0;
  Vec3 origin_ = Vec3::Zero();
  std::vector<double> values_;
};

/// Double-precision detector images, same layout as ProjectionStack.
struct DetectorImages {
  std::size_t n_views = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  static DetectorImages from(const ProjectionStack& stack);
  std::span<double> view(std::size_t k) { return {data.data() + k * rows * cols, rows * cols}; }
  std::span<const double> view(std::size_t k) const { return {data.data() + k * rows * cols, rows * cols}; }
};

/// sdd / sqrt(sdd^2 + u^2 + v^2), (u, v) physical offsets from the principal
/// point; row-major rows x cols.
std::vector<double> preweight_factors(const ScanGeometry& geom);
ProjectionStack preweight(const ProjectionStack& stack, const ScanGeometry& geom);

/// Redundancy weights, n_views x cols; the weights of the rays that measure
/// the same line sum to one. Short scans: each ray gets
/// g(beta) / (g(beta) + g(beta_c)) where beta_c is the acquisition angle of
/// the opposite ray (zero if not acquired) and g rises smoothly from zero over
/// the arc in excess of 180 deg at both ends. Full rotations: 1/2.
std::vector<double> redundancy_weights(const ScanGeometry& geom);

/// Same weights for a source path given by arbitrary matrices (for example
/// motion-compensated ones): the opposite rays are found where the path,
/// seen from the object and projected on the rotation plane, crosses the
/// ray's line. Arc positions come from the central-ray heading, so
/// time-varying rotation shifts the taper. Matches the closed form for the
/// nominal circle.
std::vector<double> redundancy_weights(const ScanGeometry& geom, std::span<const ProjectionMatrix> matrices);

/// Per-view angular sampling density relative to the nominal step: the
/// central-ray heading difference between neighbours over twice the step
/// (one-sided at the ends). Exactly 1 for the nominal circle.
std::vector<double> angular_increments(const ScanGeometry& geom, std::span<const ProjectionMatrix> matrices);

/// Discrete Ram-Lak kernel: h(0) = 1/(4 d^2), h(odd n) = -1/(pi n d)^2,
/// h(even n != 0) = 0.
double ramp_kernel(long n, double pitch);

/// Row-wise linear convolution with the ramp kernel via zero-padded FFT
/// (padding >= 2 * cols). Plans are built once; apply() is thread-safe.
class RampFilter {
public:
  RampFilter(std::size_t cols, double pitch);
  ~RampFilter();
  RampFilter(const RampFilter&) = delete;
  RampFilter& operator=(const RampFilter&) = delete;

  std::size_t cols() const { return cols_; }
  std::size_t padded() const { return padded_; }
  /// Filters each of the `rows` rows of `image` in place.
  void apply(std::span<double> image, std::size_t rows) const;

private:
  struct Impl;
  std::size_t cols_;
  std::size_t padded_;
  std::unique_ptr<Impl> impl_;
};

ProjectionStack ramp_filter(const ProjectionStack& stack, double pitch);

/// Version string of the FFT library.
std::string fft_library_version();

/// Voxels whose center projects inside the detector in every view.
std::vector<char> field_of_view_mask(std::span<const ProjectionMatrix> matrices,
                                     const ScanGeometry& geom, const VolumeSpec& spec);

struct BackprojectOptions {
  double scale = 1.0;     // multiplies every contribution
  double sid = 780.0;     // mm, numerator of the distance weight
  unsigned workers = 0;   // 0 = hardware concurrency
};

/// For each voxel and view: project, sample bilinearly (zero outside the
/// detector), add scale * (sid / w)^2 * value, w the homogeneous weight.
/// Slabs of z-slices are processed in parallel; each voxel sums its views in
/// view order, so results do not depend on the worker count.
VoxelVolume backproject(const DetectorImages& images, std::span<const ProjectionMatrix> matrices,
                        const VolumeSpec& spec, const BackprojectOptions& options);

struct ReconOptions {
  VolumeSpec volume;
  bool redundancy_weighting = true;
  bool mask_field_of_view = true;  // zero voxels outside the matrices' common field of view
  std::vector<char> support;       // when non-empty, replaces that field of view
  unsigned workers = 0;
};

/// P_k, or apply_motion(P_k, M_k) when motion (mm) is given.
std::vector<ProjectionMatrix> view_matrices(const ScanGeometry& geom,
                                            const std::optional<std::vector<RigidPose>>& motion_mm);

/// Matrices are P_k or apply_motion(P_k, M_k) (motion in mm, one per view);
/// then preweight, redundancy weights, ramp filter and backprojection.
VoxelVolume reconstruct(const ProjectionStack& stack, const ScanGeometry& geom,
                        const std::optional<std::vector<RigidPose>>& motion_mm,
                        const ReconOptions& options);

/// <base>.raw (float32 LE, x fastest) and <base>.txt (n, spacing, origin).
void save_volume(const std::filesystem::path& base, const VoxelVolume& vol);
VoxelVolume load_volume(const std::filesystem::path& base);

enum class SliceAxis { kX, kY, kZ };

struct Slice {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;
};

/// Plane of constant index along `axis`. kY (axial): rows follow z, columns x.
/// kZ (sagittal): rows follow -y (top is up), columns x. kX: rows -y, columns z.
Slice extract_slice(const VoxelVolume& vol, SliceAxis axis, std::size_t index);

}  // namespace imumoco
