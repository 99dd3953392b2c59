#include "imumoco/metrics.hpp"

#include "imumoco/io.hpp"
#include "imumoco/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace imumoco {

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw std::invalid_argument("percentile: no values");
  std::vector<double> v(values.begin(), values.end());
  const double pos = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  if (lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
  return a + (pos - static_cast<double>(lo)) * (b - a);
}

VoxelVolume normalize(const VoxelVolume& vol) {
  const auto& v = vol.values();
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  if (v.empty() || !(*mx > *mn)) throw std::invalid_argument("normalize: constant volume");
  double lo = percentile(v, 0.1);
  double hi = percentile(v, 99.9);
  if (!(hi > lo)) {
    lo = *mn;
    hi = *mx;
  }
  VoxelVolume out = vol;
  const double inv = 1.0 / (hi - lo);
  for (double& x : out.values()) x = std::clamp((x - lo) * inv, 0.0, 1.0);
  return out;
}

std::vector<char> background_mask(const VoxelVolume& reference, double threshold) {
  const std::size_t n = reference.n();
  std::vector<char> seed(reference.size(), 0);
  for (std::size_t i = 0; i < seed.size(); ++i) seed[i] = reference.values()[i] >= threshold;
  std::vector<char> mask(reference.size(), 0);
  std::size_t count = 0;
  const auto lo = [](std::size_t i) { return i == 0 ? 0 : i - 1; };
  const auto hi = [n](std::size_t i) { return std::min(i + 1, n - 1); };
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) {
        bool any = false;
        for (std::size_t c = lo(k); c <= hi(k) && !any; ++c) {
          for (std::size_t b = lo(j); b <= hi(j) && !any; ++b) {
            for (std::size_t a = lo(i); a <= hi(i) && !any; ++a) any = seed[reference.index(a, b, c)];
          }
        }
        mask[reference.index(i, j, k)] = any;
        count += any;
      }
    }
  }
  if (count == 0) throw std::invalid_argument("background_mask: empty mask");
  return mask;
}

double rmse(const VoxelVolume& a, const VoxelVolume& b, std::span<const char> mask) {
  if (!a.same_grid(b) || mask.size() != a.size()) throw std::invalid_argument("rmse: dimension mismatch");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const double d = a.values()[i] - b.values()[i];
    sum += d * d;
    ++count;
  }
  if (count == 0) throw std::invalid_argument("rmse: empty mask");
  return std::sqrt(sum / static_cast<double>(count));
}

namespace {

constexpr double kSigma = 1.5;
constexpr int kRadius = 5;

std::array<double, 2 * kRadius + 1> gaussian_taps() {
  std::array<double, 2 * kRadius + 1> t{};
  for (int d = -kRadius; d <= kRadius; ++d) t[static_cast<std::size_t>(d + kRadius)] = std::exp(-0.5 * d * d / (kSigma * kSigma));
  return t;
}

// Windowed mean along one axis with taps renormalized at the borders.
void smooth_axis(std::vector<double>& data, const Extents& dims, int axis) {
  static const auto taps = gaussian_taps();
  const std::size_t len = dims[static_cast<std::size_t>(axis)];
  if (len <= 1) return;
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? dims[0] : dims[0] * dims[1];
  const std::size_t lines = data.size() / len;
  std::vector<double> line(len);
  for (std::size_t l = 0; l < lines; ++l) {
    // Base index of line l: enumerate all coordinates except `axis`.
    std::size_t base = 0;
    if (axis == 0) base = l * dims[0];
    else if (axis == 1) base = (l / dims[0]) * dims[0] * dims[1] + l % dims[0];
    else base = l;
    for (std::size_t p = 0; p < len; ++p) line[p] = data[base + p * stride];
    for (std::size_t p = 0; p < len; ++p) {
      double sum = 0.0;
      double wsum = 0.0;
      const long first = std::max(0L, static_cast<long>(p) - kRadius);
      const long last = std::min(static_cast<long>(len) - 1, static_cast<long>(p) + kRadius);
      for (long q = first; q <= last; ++q) {
        const double w = taps[static_cast<std::size_t>(q - static_cast<long>(p) + kRadius)];
        sum += w * line[static_cast<std::size_t>(q)];
        wsum += w;
      }
      data[base + p * stride] = sum / wsum;
    }
  }
}

std::vector<double> window_mean(std::vector<double> data, const Extents& dims) {
  for (int axis = 0; axis < 3; ++axis) smooth_axis(data, dims, axis);
  return data;
}

}  // namespace

std::vector<double> ssim_map(std::span<const double> a, std::span<const double> b, const Extents& dims) {
  const std::size_t n = dims[0] * dims[1] * dims[2];
  if (a.size() != n || b.size() != n) throw std::invalid_argument("ssim: dimension mismatch");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  std::vector<double> aa(n);
  std::vector<double> bb(n);
  std::vector<double> ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = window_mean({a.begin(), a.end()}, dims);
  const auto mu_b = window_mean({b.begin(), b.end()}, dims);
  const auto e_aa = window_mean(std::move(aa), dims);
  const auto e_bb = window_mean(std::move(bb), dims);
  const auto e_ab = window_mean(std::move(ab), dims);
  std::vector<double> map(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    map[i] = ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
  }
  return map;
}

double ssim(const VoxelVolume& a, const VoxelVolume& b, std::span<const char> mask) {
  if (!a.same_grid(b) || mask.size() != a.size()) throw std::invalid_argument("ssim: dimension mismatch");
  const Extents dims{a.n(), a.n(), a.n()};
  const auto map = ssim_map(a.values(), b.values(), dims);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (!mask[i]) continue;
    sum += map[i];
    ++count;
  }
  if (count == 0) throw std::invalid_argument("ssim: empty mask");
  return sum / static_cast<double>(count);
}

QualityReport evaluate(const std::string& arm, const VoxelVolume& normalized_reference,
                       const VoxelVolume& volume, std::span<const char> mask) {
  const VoxelVolume v = normalize(volume);
  QualityReport r;
  r.arm = arm;
  r.rmse = rmse(normalized_reference, v, mask);
  r.ssim = ssim(normalized_reference, v, mask);
  r.mask_voxels = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), char{1}));
  return r;
}

void set_improvement(QualityReport& report, const QualityReport& uncorrected) {
  // Below the floor the uncorrected error is round-off and ratios are noise.
  constexpr double kRmseFloor = 1e-9;
  report.rmse_improvement_pct =
      uncorrected.rmse > kRmseFloor ? (uncorrected.rmse - report.rmse) / uncorrected.rmse * 100.0 : 0.0;
  report.ssim_improvement_pct =
      uncorrected.ssim != 0.0 ? (report.ssim - uncorrected.ssim) / uncorrected.ssim * 100.0 : 0.0;
}

std::string to_key_values(const QualityReport& r) {
  return "arm=" + r.arm + "\nrmse=" + io::format_double(r.rmse) + "\nssim=" + io::format_double(r.ssim) +
         "\nmask_voxels=" + std::to_string(r.mask_voxels) +
         "\nrmse_improvement_pct=" + io::format_double(r.rmse_improvement_pct) +
         "\nssim_improvement_pct=" + io::format_double(r.ssim_improvement_pct) + '\n';
}

std::string csv_header() { return "arm,ssim,rmse,ssim_improvement_pct,rmse_improvement_pct"; }

std::string to_csv_row(const QualityReport& r) {
  return r.arm + ',' + io::format_double(r.ssim) + ',' + io::format_double(r.rmse) + ',' +
         io::format_double(r.ssim_improvement_pct) + ',' + io::format_double(r.rmse_improvement_pct);
}

}  // namespace imumoco
