#pragma once

// Marker-based rigid motion estimation: per-view Gauss-Newton on the
// reprojection error of fiducials with known reference positions.

#include "imumoco/geometry.hpp"
#include "imumoco/projector.hpp"

#include <span>
#include <vector>

namespace imumoco {

struct ViewFit {
  RigidPose motion;             // mm
  double residual_rms = 0.0;    // px, over all coordinates
  int iterations = 0;
  bool converged = false;
  double condition = 0.0;       // of the final normal matrix
  std::vector<double> costs;    // objective after each accepted iterate, starting with the initial one
};

struct PoseEstimate {
  std::vector<RigidPose> motion;  // M_k, M_0 = I
  std::vector<double> residual_rms;
  std::vector<int> iterations;
  std::vector<bool> converged;
  std::vector<double> condition;
};

struct MarkerFitOptions {
  int max_iterations = 50;
  double step_tolerance = 1e-10;  // on the scaled parameter step (mm)
  int max_halvings = 10;
};

/// Condition number of the Gauss-Newton normal matrix at `motion`.
double normal_matrix_condition(const ProjectionMatrix& p, std::span<const Vec3> reference,
                               const RigidPose& motion);

/// Finds M minimizing sum_j |project(P M x_j) - d_j|^2 starting from `init`.
/// Updates are M <- T(c) exp(w) T(-c) M + t with c the centroid of the
/// current moved markers and w scaled by their RMS radius so that all six
/// parameters are lengths. A step is halved until the objective does not
/// increase; the fit stops when the step is below tolerance, the iteration
/// limit is reached, or no halving helps.
ViewFit fit_view(const ProjectionMatrix& p, std::span<const Eigen::Vector2d> detections,
                 std::span<const Vec3> reference, const RigidPose& init,
                 const MarkerFitOptions& options = {});

/// Throws std::invalid_argument for fewer than 6 markers, markers within 1 mm
/// of a common plane, or mismatched counts. View 0 defines the reference, so
/// M_0 = I; later views start from the previous estimate.
PoseEstimate estimate_motion(const MarkerDetections& detections, std::span<const Vec3> reference,
                             std::span<const ProjectionMatrix> matrices,
                             const MarkerFitOptions& options = {});

}  // namespace imumoco
