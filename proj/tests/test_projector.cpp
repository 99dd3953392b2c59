#include "imumoco/projector.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

using namespace imumoco;

namespace {

ScanGeometry small_geometry(const Vec3& iso = Vec3::Zero()) {
  ScanGeometry g = ScanGeometry::tiny();
  g.isocenter = iso;
  return g;
}

PosedPhantom sphere(const Vec3& center, double r, double mu) {
  PosedPhantom p;
  p.ellipsoids.emplace_back(RigidPose::from_translation(center), Vec3::Constant(r), mu);
  p.names.push_back("sphere");
  return p;
}

// Static posture plus a per-sample root x offset (meters).
SegmentTrajectory root_ramp(std::size_t n, double step_m) {
  GeneralizedCoords c;
  c.sample_rate = 31.0;
  const CoordSample base = squat_posture(30.0 * std::numbers::pi / 180.0, {0.0, 0.95, 0.0});
  for (std::size_t i = 0; i < n; ++i) {
    CoordSample q = base;
    q[0] += step_m * static_cast<double>(i);
    c.samples.push_back(q);
  }
  return forward_kinematics(c);
}

}  // namespace

TEST(RenderView, EmptyPhantomIsZero) {
  const ScanGeometry g = small_geometry();
  const auto img = render_view(PosedPhantom{}, build_trajectory(g)[0], g, 2);
  ASSERT_EQ(img.size(), g.rows * g.cols);
  for (float v : img) EXPECT_EQ(v, 0.0f);
}

TEST(RenderView, CenteredSphereCenterPixel) {
  ScanGeometry g = small_geometry();
  g.cols = 155;  // odd: a pixel center sits on the principal point
  g.rows = 121;
  const PosedPhantom p = sphere(Vec3::Zero(), 50.0, 0.02);
  const auto mats = build_trajectory(g);
  const auto img = render_view(p, mats[5], g);
  const std::size_t c = (g.cols - 1) / 2, r = (g.rows - 1) / 2;
  EXPECT_NEAR(img[r * g.cols + c], 2.0 * 50.0 * 0.02, 1e-6);
  // Rotational symmetry of the disc about the center pixel.
  for (std::size_t d = 1; d < 15; ++d) {
    EXPECT_NEAR(img[r * g.cols + c + d], img[r * g.cols + c - d], 1e-6);
    EXPECT_NEAR(img[(r + d) * g.cols + c], img[(r - d) * g.cols + c], 1e-6);
  }
}

TEST(RenderView, PixelsAreRayIntegralsFromTheMatrix) {
  const ScanGeometry g = small_geometry({0.0, 500.0, 0.0});
  GeneralizedCoords c;
  c.samples.push_back(squat_posture(0.5, {0.0, 0.95, 0.0}));
  const auto traj = forward_kinematics(c);
  const PosedPhantom ph = pose_at(default_leg_phantom(), traj, 0);
  const auto p = build_trajectory(g)[11];
  const auto img = render_view(ph, p, g);
  const Vec3 src = p.source();
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> col(0, g.cols - 1), row(0, g.rows - 1);
  for (int i = 0; i < 200; ++i) {
    const std::size_t cc = col(rng), rr = row(rng);
    const double expected =
        line_integral(ph, src, p.ray_direction(static_cast<double>(cc), static_cast<double>(rr)));
    // Agreement to float32 rounding of the stored pixel.
    EXPECT_NEAR(img[rr * g.cols + cc], expected, 1e-9 + 6e-8 * expected);
  }
}

TEST(RenderView, SubsamplesAverageSubRays) {
  const ScanGeometry g = small_geometry();
  const PosedPhantom ph = sphere({5.0, -3.0, 2.0}, 30.0, 0.02);
  const auto p = build_trajectory(g)[3];
  const auto img = render_view(ph, p, g, 3);
  for (std::size_t r = 50; r < 70; r += 3) {
    for (std::size_t c = 60; c < 95; c += 4) {
      double sum = 0.0;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          sum += line_integral(ph, p.source(), p.ray_direction(c + (b + 0.5) / 3.0 - 0.5, r + (a + 0.5) / 3.0 - 0.5));
      EXPECT_NEAR(img[r * g.cols + c], sum / 9.0, 1e-5);
    }
  }
}

TEST(RenderScan, CenteredSphereIsViewIndependent) {
  ScanGeometry g = small_geometry();
  SegmentTrajectory traj;
  traj.thigh.push_back(RigidPose::identity());
  traj.shank.push_back(RigidPose::identity());
  const Primitive s{"ball", Segment::kThigh, Vec3::Zero(), Vec3::Constant(40.0), Rotation3{}, 0.02};
  const auto stack = render_scan({s}, traj, g, false, 1, 1);
  // float32 storage bounds the agreement to a few ulps of values near 1.6.
  for (std::size_t k = 1; k < g.n_views; ++k) {
    for (std::size_t i = 0; i < stack.view_size(); ++i) {
      ASSERT_NEAR(stack.view(k)[i], stack.view(0)[i], 1e-6) << k << ' ' << i;
    }
  }
}

TEST(RenderScan, ViewsDifferByTheKnownRotation) {
  const ScanGeometry g = small_geometry();
  const Vec3 c(35.0, 10.0, -20.0);
  const PosedPhantom ph = sphere(c, 12.0, 0.05);
  const auto mats = build_trajectory(g);
  for (std::size_t k : {0u, 20u, 45u}) {
    const auto img = render_view(ph, mats[k], g, 3);
    // The brightest pixel lies on the projection of the sphere center.
    std::size_t best = 0;
    for (std::size_t i = 1; i < img.size(); ++i)
      if (img[i] > img[best]) best = i;
    const Eigen::Vector2d uv = project_point(mats[k], c);
    EXPECT_LE(std::abs(static_cast<double>(best % g.cols) - uv.x()), 1.0);
    EXPECT_LE(std::abs(static_cast<double>(best / g.cols) - uv.y()), 1.0);
  }
}

TEST(RenderScan, ZeroSwayMovingEqualsStatic) {
  const ScanGeometry g = small_geometry({0.0, 530.0, 0.0});
  const auto traj = root_ramp(g.n_views, 0.0);
  const auto prims = default_leg_phantom();
  const auto a = render_scan(prims, traj, g, false, 1, 1);
  const auto b = render_scan(prims, traj, g, true, 1, 1);
  EXPECT_EQ(a.data(), b.data());
  EXPECT_EQ(a.n_views(), g.n_views);
  EXPECT_EQ(a.times.size(), g.n_views);
}

TEST(RenderScan, DeskDimensions) {
  ScanGeometry g = ScanGeometry::desk();
  SegmentTrajectory traj;
  traj.thigh.assign(g.n_views, RigidPose::identity());
  traj.shank.assign(g.n_views, RigidPose::identity());
  const auto s = render_scan({}, traj, g, true, 1, 1);
  EXPECT_EQ(s.n_views(), 248u);
  EXPECT_EQ(s.rows(), 240u);
  EXPECT_EQ(s.cols(), 310u);
  const ScanGeometry f = ScanGeometry::full();
  EXPECT_EQ(render_view(PosedPhantom{}, build_trajectory(f)[0], f).size(), 620u * 480u);
}

TEST(RenderScan, RejectsShortTrajectory) {
  const ScanGeometry g = small_geometry();
  const auto traj = root_ramp(10, 0.0);
  EXPECT_THROW(render_scan(default_leg_phantom(), traj, g, true, 1, 1), std::invalid_argument);
}

TEST(ProjectMarkers, StaticDetectionsAreExactProjections) {
  const ScanGeometry g = small_geometry({0.0, 530.0, 0.0});
  const auto traj = root_ramp(g.n_views, 0.0);
  const auto markers = default_markers();
  const auto det = project_markers(markers, traj, g, 0.0, 1);
  const auto pos = marker_positions(markers, traj, 0);
  const auto mats = build_trajectory(g);
  for (std::size_t k = 0; k < g.n_views; ++k)
    for (std::size_t j = 0; j < markers.size(); ++j) EXPECT_EQ(det[k][j], project_point(mats[k], pos[j]));
}

TEST(ProjectMarkers, MarkerAtIsocenterHitsCenter) {
  ScanGeometry g = small_geometry();
  SegmentTrajectory traj;
  traj.thigh.assign(g.n_views, RigidPose::identity());
  traj.shank.assign(g.n_views, RigidPose::identity());
  const std::vector<Marker> m = {{Segment::kThigh, Vec3::Zero()}};
  for (const auto& view : project_markers(m, traj, g, 0.0, 1)) {
    EXPECT_NEAR(view[0].x(), g.u_center(), 1e-9);
    EXPECT_NEAR(view[0].y(), g.v_center(), 1e-9);
  }
}

TEST(ProjectMarkers, NoiseStandardDeviation) {
  ScanGeometry g = small_geometry({0.0, 530.0, 0.0});
  g.n_views = 62;
  const auto traj = root_ramp(g.n_views, 0.0);
  std::vector<Marker> markers;
  for (int i = 0; i < 81; ++i) markers.push_back(default_markers()[static_cast<std::size_t>(i % 12)]);
  const auto clean = project_markers(markers, traj, g, 0.0, 3);
  const auto noisy = project_markers(markers, traj, g, 0.5, 3);
  double sq = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < clean.size(); ++k) {
    for (std::size_t j = 0; j < markers.size(); ++j) {
      const Eigen::Vector2d d = noisy[k][j] - clean[k][j];
      sq += d.squaredNorm();
      n += 2;
    }
  }
  ASSERT_GE(n, 10000u);
  EXPECT_NEAR(std::sqrt(sq / static_cast<double>(n)), 0.5, 0.5 * 0.03);
}

TEST(ProjectMarkers, TranslationRampDriftsMonotonicallyInLateralView) {
  // Gantry parked at a lateral angle so only the subject moves.
  ScanGeometry g = small_geometry({0.0, 530.0, 0.0});
  g.start_angle_deg = 90.0;
  g.angular_step_deg = 1e-9;
  const auto still = root_ramp(g.n_views, 0.0);
  const auto moving = root_ramp(g.n_views, 0.0005);
  const auto markers = default_markers();
  const auto a = project_markers(markers, still, g, 0.0, 1);
  const auto b = project_markers(markers, moving, g, 0.0, 1);
  for (std::size_t j = 0; j < markers.size(); ++j) {
    EXPECT_EQ(b[0][j].x(), a[0][j].x());
    const double sign = b[1][j].x() > a[1][j].x() ? 1.0 : -1.0;
    for (std::size_t k = 1; k < g.n_views; ++k) {
      EXPECT_GT(sign * ((b[k][j].x() - a[k][j].x()) - (b[k - 1][j].x() - a[k - 1][j].x())), 0.0);
      EXPECT_NEAR(b[k][j].y(), a[k][j].y(), 1e-6);
    }
  }
}

TEST(StackIo, RoundTrip) {
  const ScanGeometry g = small_geometry({0.0, 530.0, 0.0});
  const auto traj = root_ramp(g.n_views, 0.0002);
  const auto stack = render_scan(default_leg_phantom(), traj, g, true, 1, 1);
  const auto base = std::filesystem::temp_directory_path() / "imumoco_stack";
  save_stack(base, stack, g);
  const auto back = load_stack(base);
  EXPECT_EQ(back.n_views(), stack.n_views());
  EXPECT_EQ(back.rows(), stack.rows());
  EXPECT_EQ(back.cols(), stack.cols());
  EXPECT_EQ(back.data(), stack.data());
  const auto pgm = std::filesystem::temp_directory_path() / "imumoco_view.pgm";
  save_view_pgm(pgm, stack, 3);
  EXPECT_EQ(std::filesystem::file_size(pgm), std::string("P5\n155 120\n65535\n").size() + 2 * 155 * 120);
}
