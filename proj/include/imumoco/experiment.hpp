#pragma once

// End-to-end experiment: leg motion, IMU, projection stacks, motion tracks,
// reconstructions and quality metrics for the four arms (static reference,
// uncorrected, IMU-based, marker-based).

#include "imumoco/imusim.hpp"
#include "imumoco/markerbase.hpp"
#include "imumoco/metrics.hpp"
#include "imumoco/moco.hpp"
#include "imumoco/projector.hpp"
#include "imumoco/recon.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace imumoco {

/// Invalid configuration (unknown key, bad value, conflicting sources).
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A pipeline stage failed; `stage` names it.
class StageError : public std::runtime_error {
public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

private:
  std::string stage_;
};

enum class Preset { kTiny, kDesk, kFull };

struct ExperimentConfig {
  std::uint64_t seed = 0;
  Preset preset = Preset::kDesk;
  ScanGeometry geometry = ScanGeometry::desk();
  VolumeSpec volume;  // center is set from the posture at the first view

  std::optional<std::filesystem::path> motion_csv;
  SwayParams sway;  // amplitudes in meters / radians
  int smooth_span = 60;
  double squat_deg = 30.0;
  double scan_start = 1.0;  // s into the motion record

  SensorMount mount;
  ImuErrorModel imu_errors;
  MocoOptions moco;
  double marker_sigma = 0.0;  // px
  unsigned subsamples = 3;    // rays per pixel along each detector axis
  unsigned workers = 0;

  /// Canonical `key=value` text; equal configs give equal text.
  std::string canonical() const;
  std::string hash() const;
};

/// Default sway amplitudes for the non-rigid two-segment experiment.
SwayParams default_sway();

/// Builds a config from `key=value` pairs layered over the defaults. Throws
/// ConfigError. Recognized keys are listed by config_keys().
ExperimentConfig make_config(const std::map<std::string, std::string>& values);
std::vector<std::string> config_keys();

struct ArmResult {
  QualityReport report;
  VoxelVolume volume;
};

struct ExperimentResult {
  ExperimentConfig config;
  Vec3 isocenter;  // mm
  GeneralizedCoords coords;          // smoothed motion at the IMU rate
  SegmentTrajectory view_traj;       // poses at the view instants
  std::vector<ImuSample> imu;        // from the scan start on
  std::vector<RigidPose> exact_mm;   // true shank motion per view
  std::vector<RigidPose> proposed_mm;
  std::vector<RigidPose> marker_mm;
  std::vector<double> marker_condition;
  ProjectionStack static_stack{0, 0, 0};
  ProjectionStack moving_stack{0, 0, 0};
  VoxelVolume reference;  // static scan, raw values
  std::vector<char> mask;
  std::vector<ArmResult> arms;  // uncorrected, proposed, marker[, exact]
  std::map<std::string, double> timings;  // s per stage
};

struct RunOptions {
  bool exact_arm = false;  // also reconstruct with the true shank motion
};

/// Motion, IMU and both tracks only (no projections).
ExperimentResult simulate_tracks(const ExperimentConfig& config);

/// Full pipeline. Throws StageError naming the failed stage.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Writes tracks, stacks, volumes, slices, results.csv, per-arm reports,
/// manifest.txt and timings.txt under `dir`. Returns the manifest text.
std::string write_outputs(const ExperimentResult& result, const std::filesystem::path& dir,
                          bool include_stacks = true);

/// Writes <dir>/manifest.txt listing every regular file under `dir` (except
/// the manifest itself and timings.txt) with its SHA-256.
std::string write_manifest(const ExperimentResult& result, const std::filesystem::path& dir);

/// After a StageError: writes config.txt and a manifest recording the failed
/// stage and the files present so far.
std::string write_failure_manifest(const ExperimentConfig& config, const StageError& error,
                                   const std::filesystem::path& dir);

/// Shank-axial, thigh-axial and sagittal slices of a normalized volume, as
/// 16-bit graymaps named <prefix>_<slice>.pgm.
void write_slices(const VoxelVolume& normalized, const Vec3& isocenter,
                  const std::filesystem::path& dir, const std::string& prefix);

struct ArmSummary {
  std::string arm;
  double ssim_mean = 0.0, ssim_std = 0.0;
  double rmse_mean = 0.0, rmse_std = 0.0;
  double ssim_improvement_mean = 0.0, ssim_improvement_std = 0.0;
  double rmse_improvement_mean = 0.0, rmse_improvement_std = 0.0;
  std::size_t runs = 0;
};

/// Per-arm results parsed from a manifest's `result.<arm>.<metric>` lines.
std::vector<QualityReport> manifest_results(const std::string& manifest_text);

/// Mean and sample standard deviation (0 for one run) per arm and metric.
/// Throws std::invalid_argument if the runs do not list the same arms.
std::vector<ArmSummary> aggregate(const std::vector<std::vector<QualityReport>>& runs);
std::string format_summary(const std::vector<ArmSummary>& summary);

}  // namespace imumoco
