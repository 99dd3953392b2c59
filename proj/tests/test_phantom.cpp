#include "imumoco/io.hpp"
#include "imumoco/phantom.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace imumoco;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

SegmentTrajectory posture(double knee_deg) {
  GeneralizedCoords c;
  c.samples.push_back(squat_posture(knee_deg * kDeg, {0.0, 0.95, 0.0}));
  return forward_kinematics(c);
}

PosedPhantom single(const Vec3& center, const Vec3& semi, double mu, const Rotation3& r = {}) {
  PosedPhantom p;
  p.ellipsoids.emplace_back(RigidPose(r, center), semi, mu);
  p.names.push_back("e");
  return p;
}

// 10^4-step quadrature of the point attenuation along [0, length]. The
// integrand is piecewise constant; a step whose end values differ has its
// jump located by bisection on point queries.
double quadrature(const PosedPhantom& ph, const Vec3& o, const Vec3& d, double length) {
  const int n = 10000;
  const double h = length / n;
  auto f = [&](double t) { return attenuation_at(ph, o + t * d); };
  double sum = 0.0;
  double fa = f(0.0);
  for (int i = 0; i < n; ++i) {
    const double a = i * h;
    const double b = a + h;
    const double fb = f(b);
    if (fa == fb) {
      sum += h * fa;
    } else {
      double lo = a, hi = b;
      for (int k = 0; k < 60; ++k) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) == fa ? lo : hi) = mid;
      }
      sum += (lo - a) * fa + (b - lo) * fb;
    }
    fa = fb;
  }
  return sum;
}

}  // namespace

TEST(DefaultPhantom, Deterministic) {
  const auto a = default_leg_phantom();
  const auto b = default_leg_phantom();
  ASSERT_EQ(a.size(), b.size());
  EXPECT_GE(a.size(), 8u);
  EXPECT_EQ(format_phantom(a), format_phantom(b));
}

TEST(DefaultPhantom, MarrowStaysInsideBoneAcrossFlexion) {
  const auto prims = default_leg_phantom();
  for (double knee : {0.0, 30.0, 60.0, 90.0}) {
    const auto traj = posture(knee);
    const PosedPhantom ph = pose_at(prims, traj, 0);
    for (const auto& [marrow, bone] : {std::pair{"femur_marrow", "femur_shaft"}, std::pair{"tibia_marrow", "tibia_shaft"}}) {
      const auto im = std::find(ph.names.begin(), ph.names.end(), marrow) - ph.names.begin();
      const auto ib = std::find(ph.names.begin(), ph.names.end(), bone) - ph.names.begin();
      ASSERT_LT(static_cast<std::size_t>(im), ph.names.size());
      ASSERT_LT(static_cast<std::size_t>(ib), ph.names.size());
      const auto& m = ph.ellipsoids[static_cast<std::size_t>(im)];
      const auto& b = ph.ellipsoids[static_cast<std::size_t>(ib)];
      for (int i = 0; i < 24; ++i) {
        for (int j = 1; j < 12; ++j) {
          const double az = 2.0 * std::numbers::pi * i / 24.0;
          const double el = std::numbers::pi * j / 12.0;
          const Vec3 unit(std::sin(el) * std::cos(az), std::cos(el), std::sin(el) * std::sin(az));
          const Vec3 x = m.pose().apply(m.semi_axes().cwiseProduct(unit));
          EXPECT_TRUE(b.contains(x)) << marrow << " at knee " << knee;
        }
      }
    }
  }
}

TEST(DefaultPhantom, BoneRayExceedsTissueRay) {
  const auto traj = posture(30.0);
  const PosedPhantom ph = pose_at(default_leg_phantom(), traj, 0);
  const RigidPose shank = traj.shank[0].scaled_translation(1000.0);
  const Vec3 bone = shank.apply({0.0, -170.0, 0.0});
  const Vec3 soft = shank.apply({0.0, -170.0, 45.0});
  const Vec3 dir = Vec3::UnitX();
  EXPECT_GT(line_integral(ph, bone - 300.0 * dir, dir), line_integral(ph, soft - 300.0 * dir, dir));
}

TEST(PoseAt, StaticTrajectoryIdenticalAcrossIndices) {
  GeneralizedCoords c;
  c.samples.assign(5, squat_posture(30.0 * kDeg, {0.0, 0.95, 0.0}));
  const auto traj = forward_kinematics(c);
  const auto prims = default_leg_phantom();
  const PosedPhantom p0 = pose_at(prims, traj, 0);
  const PosedPhantom p4 = pose_at(prims, traj, 4);
  for (std::size_t i = 0; i < p0.ellipsoids.size(); ++i)
    EXPECT_EQ(p0.ellipsoids[i].pose().matrix(), p4.ellipsoids[i].pose().matrix());
  EXPECT_THROW(pose_at(prims, traj, 5), std::out_of_range);
}

TEST(PoseAt, GlobalTranslationMovesEveryCenter) {
  GeneralizedCoords c;
  c.samples.assign(2, squat_posture(30.0 * kDeg, {0.0, 0.95, 0.0}));
  c.samples[1][0] += 0.004;
  c.samples[1][2] -= 0.002;
  const auto traj = forward_kinematics(c);
  const auto prims = default_leg_phantom();
  const PosedPhantom a = pose_at(prims, traj, 0);
  const PosedPhantom b = pose_at(prims, traj, 1);
  for (std::size_t i = 0; i < a.ellipsoids.size(); ++i)
    EXPECT_LT((b.ellipsoids[i].center() - a.ellipsoids[i].center() - Vec3(4.0, 0.0, -2.0)).norm(), 1e-9);
}

TEST(PoseAt, KneeFlexionRotatesShankAboutKnee) {
  const auto prims = default_leg_phantom();
  const auto t30 = posture(30.0);
  GeneralizedCoords c;
  c.samples.push_back(squat_posture(30.0 * kDeg, {0.0, 0.95, 0.0}));
  c.samples[0][static_cast<std::size_t>(Channel::kKneeFlex)] += 10.0 * kDeg;
  const auto t40 = forward_kinematics(c);
  const PosedPhantom a = pose_at(prims, t30, 0);
  const PosedPhantom b = pose_at(prims, t40, 0);
  const Vec3 knee = t30.knee[0] * 1000.0;
  const Mat3 axis_z = t30.thigh[0].rotation().matrix();  // flexion axis is the thigh's z
  const Mat3 rot = axis_z * Eigen::AngleAxisd(-10.0 * kDeg, Vec3::UnitZ()).toRotationMatrix() * axis_z.transpose();
  for (std::size_t i = 0; i < prims.size(); ++i) {
    const Vec3 ca = a.ellipsoids[i].center();
    const Vec3 cb = b.ellipsoids[i].center();
    if (prims[i].parent == Segment::kThigh) {
      EXPECT_LT((cb - ca).norm(), 1e-9);
    } else {
      EXPECT_LT((cb - (knee + rot * (ca - knee))).norm(), 1e-9);
    }
  }
}

TEST(LineIntegral, MissIsZero) {
  const PosedPhantom p = single({0, 0, 0}, {10, 10, 10}, 0.02);
  EXPECT_EQ(line_integral(p, {-100, 50, 0}, Vec3::UnitX()), 0.0);
  EXPECT_EQ(line_integral(PosedPhantom{}, {0, 0, 0}, Vec3::UnitX()), 0.0);
}

TEST(LineIntegral, SphereDiameter) {
  const PosedPhantom p = single({1, 2, 3}, {25, 25, 25}, 0.02);
  EXPECT_NEAR(line_integral(p, Vec3(1, 2, 3) - 100.0 * Vec3::UnitY(), Vec3::UnitY()), 2.0 * 25.0 * 0.02, 1e-14);
  // Origin inside counts only the forward half.
  EXPECT_NEAR(line_integral(p, {1, 2, 3}, Vec3::UnitZ()), 25.0 * 0.02, 1e-14);
}

TEST(LineIntegral, MatchesQuadratureOnLegPhantom) {
  const auto traj = posture(30.0);
  const PosedPhantom ph = pose_at(default_leg_phantom(), traj, 0);
  const Vec3 knee = traj.knee[0] * 1000.0;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int r = 0; r < 40; ++r) {
    const Vec3 a = knee + Vec3(60.0 * u(rng), 150.0 * u(rng), 60.0 * u(rng));
    const Vec3 d = Vec3(u(rng), 0.3 * u(rng), u(rng)).normalized();
    const Vec3 o = a - 250.0 * d;
    worst = std::max(worst, std::abs(line_integral(ph, o, d) - quadrature(ph, o, d, 500.0)));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(LineIntegral, RigidInvariance) {
  const PosedPhantom ph = pose_at(default_leg_phantom(), posture(45.0), 0);
  const RigidPose q(rotation_from_vector({0.3, -0.5, 0.2}), {12.0, -40.0, 7.0});
  PosedPhantom moved;
  for (const auto& e : ph.ellipsoids) moved.ellipsoids.emplace_back(q * e.pose(), e.semi_axes(), e.delta_mu());
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const Vec3 o(300.0 * u(rng), 500.0 + 200.0 * u(rng), 300.0 * u(rng));
    const Vec3 d = Vec3(u(rng), u(rng), u(rng)).normalized();
    EXPECT_NEAR(line_integral(ph, o, d), line_integral(moved, q.apply(o), q.rotation() * d), 1e-10);
  }
}

TEST(LineIntegral, AdditivityAndNonNegativity) {
  const auto traj = posture(30.0);
  const auto prims = default_leg_phantom();
  const PosedPhantom all = pose_at(prims, traj, 0);
  const std::vector<Primitive> first(prims.begin(), prims.begin() + 5);
  const std::vector<Primitive> rest(prims.begin() + 5, prims.end());
  const PosedPhantom a = pose_at(first, traj, 0);
  const PosedPhantom b = pose_at(rest, traj, 0);
  const Vec3 knee = traj.knee[0] * 1000.0;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const Vec3 d = Vec3(u(rng), 0.5 * u(rng), u(rng)).normalized();
    const Vec3 o = knee + Vec3(50.0 * u(rng), 200.0 * u(rng), 50.0 * u(rng)) - 300.0 * d;
    const double total = line_integral(all, o, d);
    EXPECT_NEAR(total, line_integral(a, o, d) + line_integral(b, o, d), 1e-12);
    EXPECT_GE(total, 0.0);
    EXPECT_GE(attenuation_at(all, o + 300.0 * d), 0.0);
  }
}

TEST(PhantomText, RoundTripAndErrors) {
  const auto prims = default_leg_phantom();
  const auto back = parse_phantom(format_phantom(prims));
  ASSERT_EQ(back.size(), prims.size());
  for (std::size_t i = 0; i < prims.size(); ++i) {
    EXPECT_EQ(back[i].name, prims[i].name);
    EXPECT_EQ(back[i].parent, prims[i].parent);
    EXPECT_LT((back[i].center - prims[i].center).norm(), 1e-12);
    EXPECT_LT((back[i].semi_axes - prims[i].semi_axes).norm(), 1e-12);
    EXPECT_DOUBLE_EQ(back[i].delta_mu, prims[i].delta_mu);
  }
  const auto tilted = parse_phantom("# minimal\nbead shank 0 -10 0 5 6 7 0 0 90 0.05\n");
  ASSERT_EQ(tilted.size(), 1u);
  EXPECT_LT((tilted[0].orientation * Vec3::UnitX() - Vec3::UnitY()).norm(), 1e-12);
  EXPECT_THROW(parse_phantom("bead knee 0 0 0 1 1 1 0 0 0 0.1\n"), ParseError);
  EXPECT_THROW(parse_phantom("bead thigh 0 0 0 1 x 1 0 0 0 0.1\n"), ParseError);
  EXPECT_THROW(parse_phantom("bead thigh 0 0 0 1 -1 1 0 0 0 0.1\n"), std::exception);
}
