#include "imumoco/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace imumoco;

namespace {

VoxelVolume filled(std::size_t n, double (*f)(const Vec3&)) {
  VoxelVolume v(n, 1.0, Vec3::Zero());
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) v.at(i, j, k) = f(v.position(i, j, k));
  return v;
}

// Blobs and a gradient: structured content in [0, 1].
VoxelVolume structured(std::size_t n = 24) {
  return filled(n, [](const Vec3& x) {
    const double a = std::exp(-(x - Vec3(8, 9, 10)).squaredNorm() / 18.0);
    const double b = (x - Vec3(16, 14, 12)).norm() < 5.0 ? 0.8 : 0.0;
    return std::min(1.0, 0.2 * x.x() / 24.0 + a + b);
  });
}

VoxelVolume plus_noise(const VoxelVolume& v, double amplitude, std::uint64_t seed) {
  VoxelVolume out = v;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& x : out.values()) x += amplitude * n(rng);
  return out;
}

std::vector<char> all_voxels(const VoxelVolume& v) { return std::vector<char>(v.size(), 1); }

// Canonical 2D SSIM: 11x11 Gaussian window (sigma 1.5) normalized to unit
// sum, valid region only, mean of the map.
double canonical_ssim_2d(const std::vector<double>& a, const std::vector<double>& b, int w, int h) {
  double win[11][11];
  double total = 0.0;
  for (int y = -5; y <= 5; ++y)
    for (int x = -5; x <= 5; ++x) total += win[y + 5][x + 5] = std::exp(-(x * x + y * y) / (2.0 * 1.5 * 1.5));
  for (auto& row : win)
    for (double& t : row) t /= total;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double sum = 0.0;
  int count = 0;
  for (int y = 5; y < h - 5; ++y) {
    for (int x = 5; x < w - 5; ++x) {
      double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
      for (int dy = -5; dy <= 5; ++dy) {
        for (int dx = -5; dx <= 5; ++dx) {
          const double t = win[dy + 5][dx + 5];
          const double va = a[(y + dy) * w + x + dx], vb = b[(y + dy) * w + x + dx];
          ma += t * va;
          mb += t * vb;
          aa += t * va * va;
          bb += t * vb * vb;
          ab += t * va * vb;
        }
      }
      const double sa = aa - ma * ma, sb = bb - mb * mb, sab = ab - ma * mb;
      sum += (2 * ma * mb + c1) * (2 * sab + c2) / ((ma * ma + mb * mb + c1) * (sa + sb + c2));
      ++count;
    }
  }
  return sum / count;
}

}  // namespace

TEST(Percentile, LinearInterpolation) {
  const std::vector<double> v = {4.0, 1.0, 3.0, 2.0, 5.0};
  EXPECT_DOUBLE_EQ(percentile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(percentile(v, 100.0), 5.0);
  EXPECT_DOUBLE_EQ(percentile(v, 50.0), 3.0);
  EXPECT_DOUBLE_EQ(percentile(v, 12.5), 1.5);
  EXPECT_THROW(percentile(std::vector<double>{}, 50.0), std::invalid_argument);
}

TEST(Normalize, UnitRangeAndAffineInvariance) {
  const VoxelVolume v = structured();
  const VoxelVolume n = normalize(v);
  double lo = 1.0, hi = 0.0;
  for (double x : n.values()) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  EXPECT_EQ(lo, 0.0);
  EXPECT_NEAR(hi, 1.0, 1e-12);
  VoxelVolume w = v;
  for (double& x : w.values()) x = 3.7 * x - 12.0;
  const VoxelVolume m = normalize(w);
  for (std::size_t i = 0; i < n.size(); ++i) EXPECT_NEAR(m.values()[i], n.values()[i], 1e-9);
}

TEST(Normalize, ConstantVolumeThrows) {
  VoxelVolume v(4, 1.0, Vec3::Zero());
  std::fill(v.values().begin(), v.values().end(), 0.3);
  EXPECT_THROW(normalize(v), std::invalid_argument);
}

TEST(BackgroundMask, SphereVolume) {
  // The one-voxel dilation adds a shell of relative volume near 4.7/r, so the
  // radius must be large for the 10% agreement.
  const std::size_t n = 130;
  const double r = 60.0;
  const VoxelVolume ref = filled(n, [](const Vec3& x) { return (x - Vec3::Constant(64.5)).norm() < 60.0 ? 1.0 : 0.0; });
  const auto mask = background_mask(ref);
  const double count = static_cast<double>(std::count(mask.begin(), mask.end(), 1));
  EXPECT_NEAR(count, 4.0 / 3.0 * std::numbers::pi * r * r * r, 0.1 * 4.0 / 3.0 * std::numbers::pi * r * r * r);
}

TEST(BackgroundMask, ThresholdZeroAndEmpty) {
  const VoxelVolume ref = normalize(structured());
  const auto all = background_mask(ref, 0.0);
  EXPECT_EQ(static_cast<std::size_t>(std::count(all.begin(), all.end(), 1)), ref.size());
  EXPECT_THROW(background_mask(VoxelVolume(8, 1.0, Vec3::Zero())), std::invalid_argument);
}

TEST(BackgroundMask, OneVoxelDilation) {
  VoxelVolume ref(7, 1.0, Vec3::Zero());
  ref.at(3, 3, 3) = 1.0;
  const auto mask = background_mask(ref);
  EXPECT_EQ(std::count(mask.begin(), mask.end(), 1), 27);
  EXPECT_TRUE(mask[ref.index(2, 4, 2)]);
  EXPECT_FALSE(mask[ref.index(1, 3, 3)]);
}

TEST(Rmse, Basics) {
  const VoxelVolume a = structured();
  const auto m = all_voxels(a);
  EXPECT_EQ(rmse(a, a, m), 0.0);
  VoxelVolume b = a;
  for (double& x : b.values()) x += 0.1;
  EXPECT_NEAR(rmse(a, b, m), 0.1, 1e-12);
  EXPECT_THROW(rmse(a, VoxelVolume(5, 1.0, Vec3::Zero()), m), std::invalid_argument);
}

TEST(Rmse, MatchesTwoPassOracle) {
  const VoxelVolume a = plus_noise(structured(), 0.2, 1);
  const VoxelVolume b = plus_noise(structured(), 0.2, 2);
  std::vector<char> m(a.size());
  std::mt19937_64 rng(3);
  for (char& c : m) c = static_cast<char>(rng() % 3 != 0);
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (m[i]) diffs.push_back(a.values()[i] - b.values()[i]);
  double sq = 0.0;
  for (double d : diffs) sq += d * d;
  EXPECT_NEAR(rmse(a, b, m), std::sqrt(sq / static_cast<double>(diffs.size())), 1e-12);
}

TEST(Rmse, TriangleInequality) {
  const VoxelVolume a = plus_noise(structured(), 0.1, 4);
  const VoxelVolume b = plus_noise(structured(), 0.3, 5);
  const VoxelVolume c = plus_noise(structured(), 0.05, 6);
  const auto m = all_voxels(a);
  EXPECT_LE(rmse(a, c, m), rmse(a, b, m) + rmse(b, c, m) + 1e-12);
}

TEST(Ssim, IdenticalIsExactlyOne) {
  const VoxelVolume a = structured();
  EXPECT_EQ(ssim(a, a, all_voxels(a)), 1.0);
}

TEST(Ssim, InvertedStructureScoresLow) {
  const VoxelVolume a = normalize(structured());
  VoxelVolume b = a;
  for (double& x : b.values()) x = 1.0 - x;
  const auto mask = background_mask(a);
  EXPECT_LT(ssim(a, b, mask), 0.2);
}

TEST(Ssim, Symmetric) {
  const VoxelVolume a = plus_noise(structured(), 0.05, 7);
  const VoxelVolume b = plus_noise(structured(), 0.1, 8);
  const auto m = all_voxels(a);
  EXPECT_NEAR(ssim(a, b, m), ssim(b, a, m), 1e-12);
}

TEST(Ssim, MonotoneInNoiseAmplitude) {
  const VoxelVolume a = structured();
  const auto m = all_voxels(a);
  double previous = 1.0;
  for (double amp : {0.01, 0.03, 0.06, 0.1, 0.2}) {
    const double s = ssim(a, plus_noise(a, amp, 9), m);
    EXPECT_LT(s, previous) << amp;
    previous = s;
  }
}

TEST(Ssim, SingleSliceMatchesCanonicalTwoDimensionalForm) {
  const int w = 48, h = 40;
  std::mt19937_64 rng(10);
  std::normal_distribution<double> noise(0.0, 1.0);
  using Fixture = std::pair<std::vector<double>, std::vector<double>>;
  std::vector<Fixture> fixtures;
  auto make = [&](auto fa, auto fb) {
    Fixture f{std::vector<double>(w * h), std::vector<double>(w * h)};
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        f.first[y * w + x] = fa(x, y);
        f.second[y * w + x] = fb(x, y, f.first[y * w + x]);
      }
    fixtures.push_back(std::move(f));
  };
  auto rings = [](int x, int y) { return 0.5 + 0.5 * std::sin(0.05 * ((x - 24) * (x - 24) + (y - 20) * (y - 20))); };
  auto checker = [](int x, int y) { return ((x / 6 + y / 6) % 2) ? 0.9 : 0.1; };
  auto ramp = [](int x, int y) { return (x + 0.5 * y) / 70.0; };
  make(rings, [&](int, int, double v) { return v + 0.05 * noise(rng); });
  make(checker, [](int, int, double v) { return 0.8 * v + 0.1; });
  make(ramp, [](int x, int y, double) { return 1.0 - (x + 0.5 * y) / 70.0; });
  make(rings, [&](int x, int y, double) { return checker(x, y) + 0.1 * noise(rng); });
  make([&](int, int) { return 0.5 + 0.2 * noise(rng); }, [&](int, int, double v) { return v + 0.1 * noise(rng); });

  for (const auto& [a, b] : fixtures) {
    const Extents dims{static_cast<std::size_t>(w), static_cast<std::size_t>(h), 1};
    const auto map = ssim_map(a, b, dims);
    double sum = 0.0;
    int count = 0;
    for (int y = 5; y < h - 5; ++y)
      for (int x = 5; x < w - 5; ++x) {
        sum += map[y * w + x];
        ++count;
      }
    EXPECT_NEAR(sum / count, canonical_ssim_2d(a, b, w, h), 1e-3);
  }
}

TEST(Evaluate, ImprovementArithmetic) {
  const VoxelVolume ref = normalize(structured());
  const auto mask = background_mask(ref);
  QualityReport u = evaluate("uncorrected", ref, plus_noise(ref, 0.2, 11), mask);
  QualityReport c = evaluate("imu", ref, plus_noise(ref, 0.05, 12), mask);
  set_improvement(c, u);
  EXPECT_NEAR(c.rmse_improvement_pct, (u.rmse - c.rmse) / u.rmse * 100.0, 1e-12);
  EXPECT_NEAR(c.ssim_improvement_pct, (c.ssim - u.ssim) / u.ssim * 100.0, 1e-12);
  EXPECT_EQ(c.mask_voxels, static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)));
  EXPECT_EQ(csv_header(), "arm,ssim,rmse,ssim_improvement_pct,rmse_improvement_pct");
  EXPECT_EQ(to_csv_row(c).substr(0, 4), "imu,");
}
