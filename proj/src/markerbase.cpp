#include "imumoco/markerbase.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace imumoco {
namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

double cost(const ProjectionMatrix::Matrix& p, std::span<const Eigen::Vector2d> det,
            std::span<const Vec3> ref, const RigidPose& m) {
  double sum = 0.0;
  for (std::size_t j = 0; j < ref.size(); ++j) {
    sum += (project_point(p, m.apply(ref[j])) - det[j]).squaredNorm();
  }
  return sum;
}

struct Frame {
  Vec3 centroid;
  double radius;
};

Frame moved_frame(std::span<const Vec3> ref, const RigidPose& m) {
  Vec3 c = Vec3::Zero();
  for (const auto& x : ref) c += m.apply(x);
  c /= static_cast<double>(ref.size());
  double r2 = 0.0;
  for (const auto& x : ref) r2 += (m.apply(x) - c).squaredNorm();
  return {c, std::max(std::sqrt(r2 / static_cast<double>(ref.size())), 1e-9)};
}

RigidPose perturb(const RigidPose& m, const Vec6& step, const Frame& f) {
  const Rotation3 r = rotation_from_vector(step.head<3>() / f.radius);
  const RigidPose about = RigidPose::from_translation(f.centroid) * RigidPose::from_rotation(r) *
                          RigidPose::from_translation(-f.centroid);
  return RigidPose::from_translation(step.tail<3>()) * about * m;
}

struct NormalEquations {
  Mat6 jtj = Mat6::Zero();
  Vec6 jtr = Vec6::Zero();
};

NormalEquations normal_equations(const ProjectionMatrix::Matrix& pm,
                                 std::span<const Eigen::Vector2d> detections,
                                 std::span<const Vec3> reference, const RigidPose& m,
                                 const Frame& frame) {
  const Mat3 a = pm.leftCols<3>();
  NormalEquations ne;
  for (std::size_t j = 0; j < reference.size(); ++j) {
    const Vec3 y = m.apply(reference[j]);
    const Eigen::Vector3d h = a * y + pm.col(3);
    const double u = h.x() / h.z();
    const double v = h.y() / h.z();
    Eigen::Matrix<double, 2, 3> dproj;
    dproj.row(0) = (a.row(0) - u * a.row(2)) / h.z();
    dproj.row(1) = (a.row(1) - v * a.row(2)) / h.z();
    Eigen::Matrix<double, 3, 6> dy;
    dy.leftCols<3>() = -skew(y - frame.centroid) / frame.radius;
    dy.rightCols<3>() = Mat3::Identity();
    const Eigen::Matrix<double, 2, 6> jac = dproj * dy;
    ne.jtj += jac.transpose() * jac;
    if (!detections.empty()) {
      const Eigen::Vector2d r(u - detections[j].x(), v - detections[j].y());
      ne.jtr += jac.transpose() * r;
    }
  }
  return ne;
}

double condition_of(const Mat6& jtj) {
  const Eigen::SelfAdjointEigenSolver<Mat6> eig(jtj, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  return lo > 0.0 ? eig.eigenvalues().maxCoeff() / lo : std::numeric_limits<double>::infinity();
}

}  // namespace

double normal_matrix_condition(const ProjectionMatrix& p, std::span<const Vec3> reference,
                               const RigidPose& motion) {
  return condition_of(normal_equations(p.matrix(), {}, reference, motion, moved_frame(reference, motion)).jtj);
}

ViewFit fit_view(const ProjectionMatrix& p, std::span<const Eigen::Vector2d> detections,
                 std::span<const Vec3> reference, const RigidPose& init,
                 const MarkerFitOptions& options) {
  if (detections.size() != reference.size()) throw std::invalid_argument("fit_view: count mismatch");
  const auto& pm = p.matrix();
  ViewFit fit;
  fit.motion = init;
  double current = cost(pm, detections, reference, fit.motion);
  fit.costs.push_back(current);

  for (int it = 0; it < options.max_iterations; ++it) {
    const Frame frame = moved_frame(reference, fit.motion);
    const NormalEquations ne = normal_equations(pm, detections, reference, fit.motion, frame);
    const Vec6 step = -ne.jtj.ldlt().solve(ne.jtr);
    if (!step.allFinite()) break;
    fit.iterations = it + 1;

    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= options.max_halvings; ++h, scale *= 0.5) {
      const RigidPose trial = perturb(fit.motion, scale * step, frame);
      const double c = cost(pm, detections, reference, trial);
      if (c <= current) {
        fit.motion = trial;
        current = c;
        accepted = true;
        break;
      }
    }
    if (accepted) fit.costs.push_back(current);
    if (step.norm() < options.step_tolerance) {
      fit.converged = true;
      break;
    }
    if (!accepted) {
      // No descent along the Gauss-Newton direction: a local minimum to
      // working precision.
      fit.converged = step.norm() * std::pow(0.5, options.max_halvings) < 1e-6;
      break;
    }
  }
  fit.residual_rms = std::sqrt(current / (2.0 * static_cast<double>(reference.size())));
  fit.condition = normal_matrix_condition(p, reference, fit.motion);
  return fit;
}

PoseEstimate estimate_motion(const MarkerDetections& detections, std::span<const Vec3> reference,
                             std::span<const ProjectionMatrix> matrices,
                             const MarkerFitOptions& options) {
  if (reference.size() < 6) throw std::invalid_argument("estimate_motion: need at least 6 markers");
  if (detections.size() != matrices.size()) throw std::invalid_argument("estimate_motion: one detection set per view required");
  for (std::size_t k = 0; k < detections.size(); ++k) {
    if (detections[k].size() != reference.size()) {
      throw std::invalid_argument("estimate_motion: view " + std::to_string(k) + " has " +
                                  std::to_string(detections[k].size()) + " detections, expected " +
                                  std::to_string(reference.size()));
    }
  }
  Eigen::MatrixXd centered(reference.size(), 3);
  Vec3 mean = Vec3::Zero();
  for (const auto& x : reference) mean += x;
  mean /= static_cast<double>(reference.size());
  for (std::size_t j = 0; j < reference.size(); ++j) centered.row(static_cast<Eigen::Index>(j)) = (reference[j] - mean).transpose();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Vec3 normal = svd.matrixV().col(2);
  double spread = 0.0;
  for (const auto& x : reference) spread = std::max(spread, std::abs((x - mean).dot(normal)));
  if (spread < 1.0) throw std::invalid_argument("estimate_motion: markers are coplanar within 1 mm");

  PoseEstimate est;
  const std::size_t n = matrices.size();
  est.motion.reserve(n);
  RigidPose previous = RigidPose::identity();
  for (std::size_t k = 0; k < n; ++k) {
    if (k == 0) {
      ViewFit at_identity = fit_view(matrices[0], detections[0], reference, previous,
                                     MarkerFitOptions{0, options.step_tolerance, options.max_halvings});
      est.motion.push_back(RigidPose::identity());
      est.residual_rms.push_back(at_identity.residual_rms);
      est.iterations.push_back(0);
      est.converged.push_back(true);
      est.condition.push_back(at_identity.condition);
      continue;
    }
    const ViewFit fit = fit_view(matrices[k], detections[k], reference, previous, options);
    est.motion.push_back(fit.motion);
    est.residual_rms.push_back(fit.residual_rms);
    est.iterations.push_back(fit.iterations);
    est.converged.push_back(fit.converged);
    est.condition.push_back(fit.condition);
    previous = fit.motion;
  }
  return est;
}

}  // namespace imumoco
