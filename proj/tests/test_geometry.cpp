#include "imumoco/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace imumoco;

namespace {

ScanGeometry full_at(const Vec3& iso) {
  ScanGeometry g = ScanGeometry::full();
  g.isocenter = iso;
  return g;
}

Vec3 random_point(std::mt19937_64& rng, const Vec3& center, double r) {
  std::uniform_real_distribution<double> d(-r, r);
  return center + Vec3(d(rng), d(rng), d(rng));
}

}  // namespace

TEST(Presets, FullAndDeskShareThePhysicalDetector) {
  const ScanGeometry f = ScanGeometry::full();
  const ScanGeometry d = ScanGeometry::desk();
  EXPECT_EQ(f.cols, 620u);
  EXPECT_EQ(f.rows, 480u);
  EXPECT_EQ(f.n_views, 248u);
  EXPECT_DOUBLE_EQ(f.angular_step_deg, 0.8);
  EXPECT_DOUBLE_EQ(f.frame_rate, 31.0);
  EXPECT_NEAR(d.cols * d.pixel_pitch, f.cols * f.pixel_pitch, 1e-9);
  EXPECT_NEAR(d.rows * d.pixel_pitch, f.rows * f.pixel_pitch, 1e-9);
  EXPECT_NEAR(d.duration(), f.duration(), 1e-12);
  EXPECT_NE(f.hash(), d.hash());
}

TEST(Validate, RejectsBadGeometry) {
  ScanGeometry g;
  g.sid = g.sdd + 1.0;
  EXPECT_THROW(validate(g), std::invalid_argument);
  g = ScanGeometry{};
  g.pixel_pitch = 0.0;
  EXPECT_THROW(validate(g), std::invalid_argument);
  g = ScanGeometry{};
  g.n_views = 0;
  EXPECT_THROW(validate(g), std::invalid_argument);
  EXPECT_NO_THROW(validate(ScanGeometry{}));
}

TEST(BuildTrajectory, IsocenterHitsDetectorCenter) {
  const ScanGeometry g = full_at({10.0, 500.0, -20.0});
  for (const auto& p : build_trajectory(g)) {
    const Eigen::Vector2d uv = project_point(p, g.isocenter);
    EXPECT_NEAR(uv.x(), g.u_center(), 1e-9);
    EXPECT_NEAR(uv.y(), g.v_center(), 1e-9);
  }
}

TEST(BuildTrajectory, AxialOffsetMagnification) {
  const ScanGeometry g = full_at(Vec3::Zero());
  const double expected = g.sdd / g.sid / g.pixel_pitch;
  EXPECT_NEAR(expected, 2.49334, 1e-5);
  for (const auto& p : build_trajectory(g)) {
    const Eigen::Vector2d uv = project_point(p, Vec3(0.0, 1.0, 0.0));
    EXPECT_NEAR(std::abs(uv.y() - g.v_center()), expected, 1e-9);
    EXPECT_NEAR(uv.x(), g.u_center(), 1e-9);
  }
}

TEST(BuildTrajectory, SourceCircle) {
  const ScanGeometry g = full_at({5.0, 300.0, 7.0});
  const auto mats = build_trajectory(g);
  for (std::size_t k = 0; k < mats.size(); ++k) {
    const Vec3 s = mats[k].source();
    EXPECT_NEAR((s - g.isocenter).norm(), 780.0, 1e-9);
    EXPECT_NEAR(s.y(), g.isocenter.y(), 1e-9);
    if (k > 0) {
      const Vec3 a = mats[k - 1].source() - g.isocenter;
      const Vec3 b = s - g.isocenter;
      EXPECT_NEAR(std::acos(std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0)) * 180.0 / std::numbers::pi,
                  0.8, 1e-9);
    }
  }
}

TEST(BuildTrajectory, PositiveDepthNearIsocenter) {
  const ScanGeometry g = full_at({0.0, 400.0, 0.0});
  std::mt19937_64 rng(2);
  for (const auto& p : build_trajectory(g)) {
    for (int i = 0; i < 20; ++i) {
      Vec3 x = random_point(rng, Vec3::Zero(), 1.0).normalized() * 200.0 + g.isocenter;
      const Eigen::Vector4d h(x.x(), x.y(), x.z(), 1.0);
      EXPECT_GT((p.matrix() * h).z(), 0.0);
    }
  }
}

TEST(ProjectPoint, ScaleInvariance) {
  const ScanGeometry g = full_at(Vec3::Zero());
  const auto p = build_trajectory(g)[17];
  const Vec3 x(12.0, -30.0, 44.0);
  const ProjectionMatrix::Matrix scaled = 5.0 * p.matrix();
  EXPECT_LT((project_point(scaled, x) - project_point(p, x)).norm(), 1e-12);
}

TEST(ProjectPoint, MatchesIntrinsicsTimesExtrinsics) {
  const ScanGeometry g = full_at({3.0, 200.0, -4.0});
  std::mt19937_64 rng(4);
  for (std::size_t k : {0u, 50u, 123u, 247u}) {
    const ViewParts parts = view_parts(g, k);
    const auto p = build_trajectory(g)[k];
    for (int i = 0; i < 20; ++i) {
      const Vec3 x = random_point(rng, g.isocenter, 150.0);
      const Vec3 cam = parts.rotation * (x - parts.source);
      const Vec3 h = parts.intrinsics * cam;
      const Eigen::Vector2d expected(h.x() / h.z(), h.y() / h.z());
      EXPECT_LT((project_point(p, x) - expected).norm(), 1e-9);
    }
  }
}

TEST(ProjectPoint, BehindSourceThrows) {
  const ScanGeometry g = full_at(Vec3::Zero());
  const auto p = build_trajectory(g)[0];
  EXPECT_THROW(project_point(p, p.source()), std::domain_error);
}

TEST(ApplyMotion, IdentityLeavesMatrix) {
  const auto p = build_trajectory(full_at(Vec3::Zero()))[9];
  EXPECT_LT((apply_motion(p, RigidPose::identity()).matrix() - p.matrix()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ApplyMotion, ConventionLock) {
  const ScanGeometry g = full_at({0.0, 450.0, 0.0});
  const auto mats = build_trajectory(g);
  std::mt19937_64 rng(12);
  const RigidPose translate = RigidPose::from_translation({3.0, -2.0, 4.5});
  const RigidPose general(rotation_from_vector({0.02, -0.03, 0.01}), {1.0, 2.0, -3.0});
  for (const RigidPose& m : {translate, general}) {
    for (std::size_t k : {0u, 100u, 200u}) {
      const auto corrected = apply_motion(mats[k], m);
      for (int i = 0; i < 100; ++i) {
        const Vec3 x = random_point(rng, g.isocenter, 120.0);
        EXPECT_LT((project_point(corrected, x) - project_point(mats[k], m.apply(x))).norm(), 1e-9);
      }
    }
  }
}

TEST(ProjectionMatrix, RayDirectionPassesThroughPixel) {
  const ScanGeometry g = full_at(Vec3::Zero());
  const auto p = build_trajectory(g)[33];
  const Vec3 d = p.ray_direction(100.0, 50.0);
  EXPECT_NEAR(d.norm(), 1.0, 1e-12);
  const Vec3 x = p.source() + 900.0 * d;
  EXPECT_LT((project_point(p, x) - Eigen::Vector2d(100.0, 50.0)).norm(), 1e-9);
}
