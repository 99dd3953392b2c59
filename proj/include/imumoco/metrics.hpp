#pragma once

// Image quality against a static reference: robust 0-1 scaling, background
// mask, masked RMSE and Gaussian-window SSIM.

#include "imumoco/recon.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace imumoco {

/// Value at percentile p (0-100), linear interpolation between order
/// statistics.
double percentile(std::span<const double> values, double p);

/// Affine map sending the 0.1 and 99.9 percentiles to 0 and 1, clamped to
/// [0, 1]. Falls back to min and max when the percentiles coincide. Throws
/// std::invalid_argument for a constant volume.
VoxelVolume normalize(const VoxelVolume& vol);

/// reference >= threshold, then grown by one voxel (26-neighbourhood).
/// Throws std::invalid_argument if empty.
std::vector<char> background_mask(const VoxelVolume& reference, double threshold = 0.05);

double rmse(const VoxelVolume& a, const VoxelVolume& b, std::span<const char> mask);

/// Grid extents (x fastest) for the window-based routines.
using Extents = std::array<std::size_t, 3>;

/// Local SSIM at every voxel. Statistics use a separable Gaussian window
/// (sigma 1.5 voxels, radius 5) whose taps are renormalized where the window
/// leaves the grid. C1 = 0.01^2, C2 = 0.03^2 for unit dynamic range.
std::vector<double> ssim_map(std::span<const double> a, std::span<const double> b, const Extents& dims);

/// Mean of the SSIM map over the mask.
double ssim(const VoxelVolume& a, const VoxelVolume& b, std::span<const char> mask);

struct QualityReport {
  std::string arm;
  double rmse = 0.0;
  double ssim = 0.0;
  std::size_t mask_voxels = 0;
  double rmse_improvement_pct = 0.0;  // (rmse_u - rmse) / rmse_u * 100
  double ssim_improvement_pct = 0.0;  // (ssim - ssim_u) / ssim_u * 100
};

/// Normalizes `volume` and scores it against the normalized reference.
QualityReport evaluate(const std::string& arm, const VoxelVolume& normalized_reference,
                       const VoxelVolume& volume, std::span<const char> mask);

/// Fills the improvement fields relative to `uncorrected`; zero when the
/// uncorrected SSIM is zero or its RMSE is below 1e-9 (round-off level on
/// unit-range volumes).
void set_improvement(QualityReport& report, const QualityReport& uncorrected);

std::string to_key_values(const QualityReport& report);
std::string csv_header();
std::string to_csv_row(const QualityReport& report);

}  // namespace imumoco
