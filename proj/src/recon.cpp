#include "imumoco/recon.hpp"

#include "imumoco/io.hpp"
#include "imumoco/parallel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace imumoco {

VoxelVolume::VoxelVolume(const VolumeSpec& spec)
    : VoxelVolume(spec.n, spec.spacing,
                  spec.center - Vec3::Constant(0.5 * spec.spacing * static_cast<double>(spec.n - 1))) {}

VoxelVolume::VoxelVolume(std::size_t n, double spacing, const Vec3& origin)
    : n_(n), spacing_(spacing), origin_(origin), values_(n * n * n, 0.0) {
  if (n == 0) throw std::invalid_argument("VoxelVolume: empty grid");
  if (!(spacing > 0.0)) throw std::invalid_argument("VoxelVolume: spacing must be > 0");
}

bool VoxelVolume::same_grid(const VoxelVolume& other) const {
  return n_ == other.n_ && spacing_ == other.spacing_ && origin_ == other.origin_;
}

DetectorImages DetectorImages::from(const ProjectionStack& stack) {
  DetectorImages out{stack.n_views(), stack.rows(), stack.cols(), {}};
  out.data.assign(stack.data().begin(), stack.data().end());
  return out;
}

std::vector<double> preweight_factors(const ScanGeometry& geom) {
  std::vector<double> w(geom.rows * geom.cols);
  const double d2 = geom.sdd * geom.sdd;
  for (std::size_t r = 0; r < geom.rows; ++r) {
    const double v = (static_cast<double>(r) - geom.v_center()) * geom.pixel_pitch;
    for (std::size_t c = 0; c < geom.cols; ++c) {
      const double u = (static_cast<double>(c) - geom.u_center()) * geom.pixel_pitch;
      w[r * geom.cols + c] = geom.sdd / std::sqrt(d2 + u * u + v * v);
    }
  }
  return w;
}

ProjectionStack preweight(const ProjectionStack& stack, const ScanGeometry& geom) {
  if (stack.rows() != geom.rows || stack.cols() != geom.cols) {
    throw std::invalid_argument("preweight: stack does not match the detector");
  }
  const auto w = preweight_factors(geom);
  ProjectionStack out = stack;
  for (std::size_t k = 0; k < out.n_views(); ++k) {
    auto view = out.view(k);
    for (std::size_t p = 0; p < view.size(); ++p) view[p] = static_cast<float>(view[p] * w[p]);
  }
  return out;
}

std::vector<double> redundancy_weights(const ScanGeometry& geom) {
  const std::size_t n = geom.n_views;
  std::vector<double> w(n * geom.cols, 1.0);
  const double step = geom.angular_step_deg * std::numbers::pi / 180.0;
  const double two_pi = 2.0 * std::numbers::pi;
  if (static_cast<double>(n) * std::abs(step) >= two_pi * (1.0 - 1e-9)) {
    std::fill(w.begin(), w.end(), 0.5);
    return w;
  }
  if (n < 2) return w;
  const double arc = static_cast<double>(n - 1) * std::abs(step);
  const double taper = std::max(arc - std::numbers::pi, std::abs(step));
  auto g = [arc, taper](double beta) {
    if (beta < 0.0 || beta > arc) return 0.0;
    const double s = std::sin(0.5 * std::numbers::pi * std::min(1.0, std::min(beta, arc - beta) / taper));
    return s * s;
  };
  // Rays (beta, gamma) and (beta + pi + 2 gamma, -gamma) are the same line;
  // a negative step mirrors the fan.
  const double sign = step >= 0.0 ? 1.0 : -1.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double beta = static_cast<double>(k) * std::abs(step);
    const double gk = g(beta);
    for (std::size_t c = 0; c < geom.cols; ++c) {
      const double u = (static_cast<double>(c) - geom.u_center()) * geom.pixel_pitch;
      const double gamma = sign * std::atan(u / geom.sdd);
      const double other = g(beta + std::numbers::pi + 2.0 * gamma) + g(beta - std::numbers::pi + 2.0 * gamma);
      const double sum = gk + other;
      w[k * geom.cols + c] = sum > 0.0 ? gk / sum : 1.0;
    }
  }
  return w;
}

std::vector<double> redundancy_weights(const ScanGeometry& geom, std::span<const ProjectionMatrix> matrices) {
  const std::size_t n = geom.n_views;
  if (matrices.size() != n) throw std::invalid_argument("redundancy_weights: one matrix per view required");
  const double step = std::abs(geom.angular_step_deg) * std::numbers::pi / 180.0;
  constexpr double pi = std::numbers::pi;
  std::vector<double> w(n * geom.cols, 1.0);
  if (static_cast<double>(n) * step >= 2.0 * pi * (1.0 - 1e-9)) {
    std::fill(w.begin(), w.end(), 0.5);
    return w;
  }
  if (n < 2) return w;
  // Arc position of each view from the central ray's heading in the object frame.
  std::vector<double> beta(n);
  {
    double phi0 = 0.0;
    double prev = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const Vec3 d = matrices[j].ray_direction(geom.u_center(), geom.v_center());
      double phi = std::atan2(d.z(), d.x());
      if (j == 0) phi0 = phi;
      else {
        while (phi - prev > pi) phi -= 2.0 * pi;
        while (phi - prev < -pi) phi += 2.0 * pi;
      }
      prev = phi;
      beta[j] = std::abs(phi - phi0);
    }
  }
  const double arc = beta[n - 1];
  const double taper = std::max(arc - pi, step);
  auto g = [arc, taper](double beta) {
    if (beta < 0.0 || beta > arc) return 0.0;
    const double s = std::sin(0.5 * pi * std::min(1.0, std::min(beta, arc - beta) / taper));
    return s * s;
  };

  // Source path in the object frame, projected on the rotation plane, in
  // polar form about the isocenter so a circle interpolates exactly.
  std::vector<double> radius(n), angle(n);
  for (std::size_t j = 0; j < n; ++j) {
    const Vec3 s = matrices[j].source() - geom.isocenter;
    radius[j] = std::hypot(s.x(), s.z());
    angle[j] = std::atan2(s.z(), s.x());
    if (j > 0) {
      while (angle[j] - angle[j - 1] > pi) angle[j] -= 2.0 * pi;
      while (angle[j] - angle[j - 1] < -pi) angle[j] += 2.0 * pi;
    }
  }
  auto path = [&](std::size_t j, double t) {
    const std::size_t j1 = std::min(j + 1, n - 1);
    const double r = radius[j] + t * (radius[j1] - radius[j]);
    const double a = angle[j] + t * (angle[j1] - angle[j]);
    return Eigen::Vector2d(r * std::cos(a), r * std::sin(a));
  };

  // Ray (k, c) is the line through source k; every other place where the
  // path crosses that line measures it again. Crossings closer than 90 deg
  // of arc to view k are the view itself.
  const auto near = static_cast<std::size_t>(std::ceil(0.5 * pi / step));
  std::vector<double> side(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::Vector2d origin = path(k, 0.0);
    const double gk = g(beta[k]);
    for (std::size_t c = 0; c < geom.cols; ++c) {
      const Vec3 d3 = matrices[k].ray_direction(static_cast<double>(c), geom.v_center());
      const Eigen::Vector2d d(d3.x(), d3.z());
      auto cross = [&](const Eigen::Vector2d& q) { return d.x() * (q.y() - origin.y()) - d.y() * (q.x() - origin.x()); };
      for (std::size_t j = 0; j < n; ++j) side[j] = cross(path(j, 0.0));
      double others = 0.0;
      for (std::size_t j = 0; j + 1 < n; ++j) {
        if (j + near > k && j < k + near + 1) continue;
        if (side[j] != 0.0 && (side[j] > 0.0) == (side[j + 1] > 0.0)) continue;
        if (side[j] != 0.0 && side[j + 1] == 0.0) continue;  // counted at node j + 1
        double lo = 0.0;
        double hi = 1.0;
        if (side[j] != 0.0) {
          const bool lo_positive = side[j] > 0.0;
          for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            if ((cross(path(j, mid)) > 0.0) == lo_positive) lo = mid;
            else hi = mid;
          }
        } else {
          hi = 0.0;
        }
        const double t = 0.5 * (lo + hi);
        others += g(beta[j] + t * (beta[j + 1] - beta[j]));
      }
      const double sum = gk + others;
      w[k * geom.cols + c] = sum > 0.0 ? gk / sum : 1.0;
    }
  }
  return w;
}

std::vector<double> angular_increments(const ScanGeometry& geom, std::span<const ProjectionMatrix> matrices) {
  const std::size_t n = matrices.size();
  std::vector<double> inc(n, 1.0);
  if (n < 2) return inc;
  constexpr double pi = std::numbers::pi;
  std::vector<double> phi(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Vec3 d = matrices[k].ray_direction(geom.u_center(), geom.v_center());
    phi[k] = std::atan2(d.z(), d.x());
    if (k > 0) {
      while (phi[k] - phi[k - 1] > pi) phi[k] -= 2.0 * pi;
      while (phi[k] - phi[k - 1] < -pi) phi[k] += 2.0 * pi;
    }
  }
  const double step = std::abs(geom.angular_step_deg) * pi / 180.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t a = k == 0 ? 0 : k - 1;
    const std::size_t b = k + 1 == n ? n - 1 : k + 1;
    inc[k] = std::abs(phi[b] - phi[a]) / (static_cast<double>(b - a) * step);
  }
  return inc;
}

double ramp_kernel(long n, double pitch) {
  if (n == 0) return 1.0 / (4.0 * pitch * pitch);
  if (n % 2 == 0) return 0.0;
  const double d = std::numbers::pi * static_cast<double>(n) * pitch;
  return -1.0 / (d * d);
}

struct RampFilter::Impl {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
  std::vector<std::complex<double>> kernel;  // spectrum of the wrapped kernel, scaled by 1/N
};

namespace {

// FFTW planning is not thread-safe; execution with new-array calls is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

template <typename T>
std::unique_ptr<T[], FftwDeleter> fftw_buffer(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
  if (p == nullptr) throw std::bad_alloc();
  return std::unique_ptr<T[], FftwDeleter>(p);
}

}  // namespace

RampFilter::RampFilter(std::size_t cols, double pitch) : cols_(cols), impl_(std::make_unique<Impl>()) {
  if (cols < 2) throw std::invalid_argument("RampFilter: rows need at least 2 samples");
  if (!(pitch > 0.0)) throw std::invalid_argument("RampFilter: pitch must be > 0");
  padded_ = 1;
  while (padded_ < 2 * cols) padded_ *= 2;
  const std::size_t half = padded_ / 2 + 1;

  auto real = fftw_buffer<double>(padded_);
  auto spec = fftw_buffer<fftw_complex>(half);
  {
    std::lock_guard lock(fftw_planner_mutex());
    impl_->forward = fftw_plan_dft_r2c_1d(static_cast<int>(padded_), real.get(), spec.get(), FFTW_ESTIMATE);
    impl_->backward = fftw_plan_dft_c2r_1d(static_cast<int>(padded_), spec.get(), real.get(), FFTW_ESTIMATE);
  }
  if (impl_->forward == nullptr || impl_->backward == nullptr) throw std::runtime_error("RampFilter: FFTW planning failed");

  // Kernel taps |n| <= cols - 1 wrapped circularly; padding >= 2 cols keeps
  // the circular convolution equal to the linear one on the row.
  std::fill(real.get(), real.get() + padded_, 0.0);
  const long reach = static_cast<long>(cols) - 1;
  for (long n = -reach; n <= reach; ++n) {
    const std::size_t idx = n >= 0 ? static_cast<std::size_t>(n) : padded_ - static_cast<std::size_t>(-n);
    real[idx] = ramp_kernel(n, pitch);
  }
  fftw_execute_dft_r2c(impl_->forward, real.get(), spec.get());
  impl_->kernel.resize(half);
  const double norm = 1.0 / static_cast<double>(padded_);
  for (std::size_t f = 0; f < half; ++f) impl_->kernel[f] = std::complex<double>(spec[f][0], spec[f][1]) * norm;
}

RampFilter::~RampFilter() {
  std::lock_guard lock(fftw_planner_mutex());
  if (impl_->forward != nullptr) fftw_destroy_plan(impl_->forward);
  if (impl_->backward != nullptr) fftw_destroy_plan(impl_->backward);
}

void RampFilter::apply(std::span<double> image, std::size_t rows) const {
  if (image.size() != rows * cols_) throw std::invalid_argument("RampFilter::apply: size mismatch");
  const std::size_t half = padded_ / 2 + 1;
  auto real = fftw_buffer<double>(padded_);
  auto spec = fftw_buffer<fftw_complex>(half);
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = image.data() + r * cols_;
    std::copy(row, row + cols_, real.get());
    std::fill(real.get() + cols_, real.get() + padded_, 0.0);
    fftw_execute_dft_r2c(impl_->forward, real.get(), spec.get());
    for (std::size_t f = 0; f < half; ++f) {
      const std::complex<double> z = std::complex<double>(spec[f][0], spec[f][1]) * impl_->kernel[f];
      spec[f][0] = z.real();
      spec[f][1] = z.imag();
    }
    fftw_execute_dft_c2r(impl_->backward, spec.get(), real.get());
    std::copy(real.get(), real.get() + cols_, row);
  }
}

ProjectionStack ramp_filter(const ProjectionStack& stack, double pitch) {
  const RampFilter filter(stack.cols(), pitch);
  DetectorImages images = DetectorImages::from(stack);
  ProjectionStack out(stack.n_views(), stack.rows(), stack.cols());
  out.times = stack.times;
  for (std::size_t k = 0; k < stack.n_views(); ++k) {
    filter.apply(images.view(k), stack.rows());
    std::transform(images.view(k).begin(), images.view(k).end(), out.view(k).begin(),
                   [](double v) { return static_cast<float>(v); });
  }
  return out;
}

std::string fft_library_version() { return fftw_version; }

namespace {

struct RowProjector {
  Eigen::Vector3d start;
  Eigen::Vector3d step;
};

// Homogeneous image of voxel (0, j, k) and the increment per voxel along x.
RowProjector row_projector(const ProjectionMatrix::Matrix& p, const VoxelVolume& vol,
                           std::size_t j, std::size_t k) {
  const Vec3 x0 = vol.position(0, j, k);
  return {p.leftCols<3>() * x0 + p.col(3), p.col(0) * vol.spacing()};
}

}  // namespace

std::vector<char> field_of_view_mask(std::span<const ProjectionMatrix> matrices,
                                     const ScanGeometry& geom, const VolumeSpec& spec) {
  const VoxelVolume grid(spec);
  const std::size_t n = spec.n;
  std::vector<char> mask(n * n * n, 1);
  const double umax = static_cast<double>(geom.cols - 1);
  const double vmax = static_cast<double>(geom.rows - 1);
  for (const auto& p : matrices) {
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t j = 0; j < n; ++j) {
        const RowProjector rp = row_projector(p.matrix(), grid, j, k);
        for (std::size_t i = 0; i < n; ++i) {
          const Eigen::Vector3d h = rp.start + static_cast<double>(i) * rp.step;
          char& m = mask[grid.index(i, j, k)];
          if (!m) continue;
          if (h.z() <= 0.0) {
            m = 0;
            continue;
          }
          const double u = h.x() / h.z();
          const double v = h.y() / h.z();
          if (u < 0.0 || u > umax || v < 0.0 || v > vmax) m = 0;
        }
      }
    }
  }
  return mask;
}

VoxelVolume backproject(const DetectorImages& images, std::span<const ProjectionMatrix> matrices,
                        const VolumeSpec& spec, const BackprojectOptions& options) {
  if (matrices.size() != images.n_views) {
    throw std::invalid_argument("backproject: " + std::to_string(matrices.size()) + " matrices for " +
                                std::to_string(images.n_views) + " views");
  }
  if (images.cols < 2 || images.rows < 2) throw std::invalid_argument("backproject: detector too small");
  VoxelVolume vol(spec);
  const std::size_t n = spec.n;
  const std::size_t cols = images.cols;
  const double umax = static_cast<double>(cols - 1);
  const double vmax = static_cast<double>(images.rows - 1);
  const double sid2 = options.sid * options.sid;

  parallel_for(n, options.workers, [&](std::size_t k_begin, std::size_t k_end) {
    for (std::size_t view = 0; view < matrices.size(); ++view) {
      const auto& p = matrices[view].matrix();
      const double* img = images.view(view).data();
      for (std::size_t k = k_begin; k < k_end; ++k) {
        for (std::size_t j = 0; j < n; ++j) {
          const RowProjector rp = row_projector(p, vol, j, k);
          double* out = &vol.at(0, j, k);
          for (std::size_t i = 0; i < n; ++i) {
            const Eigen::Vector3d h = rp.start + static_cast<double>(i) * rp.step;
            const double w = h.z();
            if (!(w > 0.0)) continue;
            const double u = h.x() / w;
            const double v = h.y() / w;
            if (!(u >= 0.0 && u <= umax && v >= 0.0 && v <= vmax)) continue;
            const std::size_t c0 = std::min(static_cast<std::size_t>(u), cols - 2);
            const std::size_t r0 = std::min(static_cast<std::size_t>(v), images.rows - 2);
            const double fu = u - static_cast<double>(c0);
            const double fv = v - static_cast<double>(r0);
            const double* q = img + r0 * cols + c0;
            const double top = q[0] + fu * (q[1] - q[0]);
            const double bottom = q[cols] + fu * (q[cols + 1] - q[cols]);
            const double sample = top + fv * (bottom - top);
            out[i] += options.scale * (sid2 / (w * w)) * sample;
          }
        }
      }
    }
  });
  return vol;
}

std::vector<ProjectionMatrix> view_matrices(const ScanGeometry& geom,
                                            const std::optional<std::vector<RigidPose>>& motion_mm) {
  auto matrices = build_trajectory(geom);
  if (!motion_mm) return matrices;
  if (motion_mm->size() != geom.n_views) {
    throw std::invalid_argument("reconstruct: " + std::to_string(motion_mm->size()) + " motion matrices for " +
                                std::to_string(geom.n_views) + " views");
  }
  for (std::size_t k = 0; k < matrices.size(); ++k) matrices[k] = apply_motion(matrices[k], (*motion_mm)[k]);
  return matrices;
}

VoxelVolume reconstruct(const ProjectionStack& stack, const ScanGeometry& geom,
                        const std::optional<std::vector<RigidPose>>& motion_mm,
                        const ReconOptions& options) {
  if (stack.n_views() != geom.n_views || stack.rows() != geom.rows || stack.cols() != geom.cols) {
    throw std::invalid_argument("reconstruct: stack does not match the scan geometry");
  }
  const auto matrices = view_matrices(geom, motion_mm);

  DetectorImages images = DetectorImages::from(stack);
  const auto pre = preweight_factors(geom);
  std::vector<double> redundancy(geom.n_views * geom.cols, 1.0);
  if (options.redundancy_weighting) {
    const bool moved = motion_mm && std::any_of(motion_mm->begin(), motion_mm->end(), [](const RigidPose& m) {
                         return m.matrix() != Eigen::Matrix4d::Identity();
                       });
    redundancy = moved ? redundancy_weights(geom, matrices) : redundancy_weights(geom);
    if (moved) {
      const auto inc = angular_increments(geom, matrices);
      for (std::size_t k = 0; k < geom.n_views; ++k)
        for (std::size_t c = 0; c < geom.cols; ++c) redundancy[k * geom.cols + c] *= inc[k];
    }
  }
  const RampFilter filter(geom.cols, geom.pixel_pitch);
  parallel_for(geom.n_views, options.workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      auto view = images.view(k);
      for (std::size_t r = 0; r < geom.rows; ++r) {
        for (std::size_t c = 0; c < geom.cols; ++c) {
          view[r * geom.cols + c] *= pre[r * geom.cols + c] * redundancy[k * geom.cols + c];
        }
      }
      filter.apply(view, geom.rows);
    }
  });

  BackprojectOptions bp;
  bp.sid = geom.sid;
  bp.workers = options.workers;
  // Ramp taps carry no pitch factor; convert to isocenter-plane sampling.
  bp.scale = std::abs(geom.angular_step_deg) * std::numbers::pi / 180.0 * geom.pixel_pitch *
             geom.magnification();
  VoxelVolume vol = backproject(images, matrices, options.volume, bp);

  if (!options.support.empty()) {
    if (options.support.size() != vol.size()) throw std::invalid_argument("reconstruct: support size mismatch");
    for (std::size_t i = 0; i < vol.size(); ++i) {
      if (!options.support[i]) vol.values()[i] = 0.0;
    }
  } else if (options.mask_field_of_view) {
    const auto mask = field_of_view_mask(matrices, geom, options.volume);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) vol.values()[i] = 0.0;
    }
  }
  return vol;
}

void save_volume(const std::filesystem::path& base, const VoxelVolume& vol) {
  io::write_raw_f32(std::filesystem::path(base).concat(".raw"), vol.values());
  std::string meta;
  meta += "format=float32_le\n";
  meta += "order=x,y,z\n";
  meta += "n=" + std::to_string(vol.n()) + '\n';
  meta += "spacing_mm=" + io::format_double(vol.spacing()) + '\n';
  meta += "origin_mm=" + io::format_double(vol.origin().x()) + ',' + io::format_double(vol.origin().y()) +
          ',' + io::format_double(vol.origin().z()) + '\n';
  io::write_text(std::filesystem::path(base).concat(".txt"), meta);
}

VoxelVolume load_volume(const std::filesystem::path& base) {
  const auto meta = io::parse_key_values(io::read_text(std::filesystem::path(base).concat(".txt")));
  auto get = [&meta](const std::string& key) -> const std::string& {
    const auto it = meta.find(key);
    if (it == meta.end()) throw std::runtime_error("volume sidecar: missing key '" + key + "'");
    return it->second;
  };
  double spacing = 0.0;
  if (!io::parse_double(get("spacing_mm"), spacing)) throw std::runtime_error("volume sidecar: bad spacing");
  const auto parts = io::split(get("origin_mm"), ',');
  Vec3 origin;
  if (parts.size() != 3) throw std::runtime_error("volume sidecar: bad origin");
  for (int a = 0; a < 3; ++a) {
    if (!io::parse_double(parts[static_cast<std::size_t>(a)], origin[a])) {
      throw std::runtime_error("volume sidecar: bad origin");
    }
  }
  VoxelVolume vol(std::stoul(get("n")), spacing, origin);
  const auto data = io::read_raw_f32(std::filesystem::path(base).concat(".raw"));
  if (data.size() != vol.size()) throw std::runtime_error("volume raw size does not match sidecar");
  std::copy(data.begin(), data.end(), vol.values().begin());
  return vol;
}

Slice extract_slice(const VoxelVolume& vol, SliceAxis axis, std::size_t index) {
  const std::size_t n = vol.n();
  if (index >= n) throw std::out_of_range("extract_slice: index out of range");
  Slice s{n, n, std::vector<double>(n * n)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      double v = 0.0;
      switch (axis) {
        case SliceAxis::kY: v = vol.at(c, index, r); break;
        case SliceAxis::kZ: v = vol.at(c, n - 1 - r, index); break;
        case SliceAxis::kX: v = vol.at(index, n - 1 - r, c); break;
      }
      s.pixels[r * n + c] = v;
    }
  }
  return s;
}

}  // namespace imumoco
