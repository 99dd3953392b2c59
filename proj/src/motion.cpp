#include "imumoco/motion.hpp"

#include "imumoco/io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace imumoco {

void validate(const GeneralizedCoords& coords) {
  if (!(coords.sample_rate > 0.0) || !std::isfinite(coords.sample_rate)) {
    throw std::invalid_argument("generalized coordinates: sample_rate must be > 0");
  }
  for (std::size_t i = 0; i < coords.size(); ++i) {
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      const double v = coords.samples[i][c];
      if (!std::isfinite(v)) {
        throw std::invalid_argument("generalized coordinates: non-finite value at sample " +
                                    std::to_string(i));
      }
      if (is_angle(static_cast<Channel>(c)) && std::abs(v) > std::numbers::pi) {
        throw std::invalid_argument("generalized coordinates: angle " +
                                    std::string(kChannelNames[c]) + " outside +-pi at sample " +
                                    std::to_string(i));
      }
    }
  }
}

CoordSample squat_posture(double knee_flexion, const Vec3& root_position) {
  CoordSample q{};
  q[static_cast<std::size_t>(Channel::kRootX)] = root_position.x();
  q[static_cast<std::size_t>(Channel::kRootY)] = root_position.y();
  q[static_cast<std::size_t>(Channel::kRootZ)] = root_position.z();
  q[static_cast<std::size_t>(Channel::kHipFlex)] = 0.5 * knee_flexion;
  q[static_cast<std::size_t>(Channel::kKneeFlex)] = knee_flexion;
  return q;
}

GeneralizedCoords generate_sway(const SwayParams& params, std::uint64_t seed) {
  if (!(params.sample_rate > 0.0)) throw std::invalid_argument("sway: sample_rate must be > 0");
  if (params.duration < params.scan_duration) {
    throw std::invalid_argument("sway: duration " + std::to_string(params.duration) +
                                " s is shorter than the scan (" +
                                std::to_string(params.scan_duration) + " s)");
  }
  for (const auto& ch : params.channels) {
    if (ch.amplitude < 0.0 || ch.frequency < 0.0) {
      throw std::invalid_argument("sway: amplitudes and frequencies must be >= 0");
    }
  }

  GeneralizedCoords out;
  out.sample_rate = params.sample_rate;
  out.start_time = 0.0;
  const auto n = static_cast<std::size_t>(std::floor(params.duration * params.sample_rate)) + 1;
  const CoordSample base = squat_posture(params.squat_knee_flexion, params.root_position);
  out.samples.assign(n, base);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  std::uniform_int_distribution<int> count_dist(2, 4);

  std::vector<double> raw(n);
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    // Draw unconditionally so one channel's settings never shift another's phases.
    const int harmonics = count_dist(rng);
    std::array<double, 4> phases{};
    for (double& p : phases) p = phase_dist(rng);

    const SwayChannel& ch = params.channels[c];
    if (ch.amplitude == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = out.time(i);
      double v = 0.0;
      for (int h = 1; h <= harmonics; ++h) {
        v += std::sin(2.0 * std::numbers::pi * h * ch.frequency * t + ch.phase + phases[h - 1]) / h;
      }
      raw[i] = v;
    }
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    const double mid = 0.5 * (*hi + *lo);
    const double half = 0.5 * (*hi - *lo);
    if (!(half > 0.0)) continue;
    for (std::size_t i = 0; i < n; ++i) {
      out.samples[i][c] += ch.amplitude * (raw[i] - mid) / half;
    }
  }
  validate(out);
  return out;
}

GeneralizedCoords load_coords_csv(const std::filesystem::path& path) {
  const std::string text = io::read_text(path);
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  bool degrees = false;
  std::vector<int> column_of(kNumChannels, -1);
  int time_column = -1;
  std::size_t header_width = 0;
  bool have_header = false;
  std::vector<double> times;
  GeneralizedCoords out;

  while (std::getline(in, line)) {
    ++row;
    std::string_view view = io::trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      const auto pos = view.find("units:");
      if (pos != std::string_view::npos) {
        const std::string_view units = view.substr(pos + 6);
        degrees = units.find("deg") != std::string_view::npos;
      }
      continue;
    }
    const auto cells = io::split(view, ',');
    if (!have_header) {
      header_width = cells.size();
      for (std::size_t j = 0; j < cells.size(); ++j) {
        const std::string_view name = io::trim(cells[j]);
        if (name == "t") time_column = static_cast<int>(j);
        for (std::size_t c = 0; c < kNumChannels; ++c) {
          if (name == kChannelNames[c]) column_of[c] = static_cast<int>(j);
        }
      }
      if (time_column < 0) throw ParseError("missing column 't'", row, 0);
      for (std::size_t c = 0; c < kNumChannels; ++c) {
        if (column_of[c] < 0) {
          throw ParseError("missing channel '" + std::string(kChannelNames[c]) + "'", row, 0);
        }
      }
      have_header = true;
      continue;
    }
    if (cells.size() != header_width) {
      throw ParseError("expected " + std::to_string(header_width) + " cells, found " +
                           std::to_string(cells.size()),
                       row, 0);
    }
    std::vector<double> values(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (!io::parse_double(cells[j], values[j])) {
        throw ParseError("non-numeric cell '" + std::string(io::trim(cells[j])) + "'", row, j + 1);
      }
    }
    CoordSample q{};
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      double v = values[static_cast<std::size_t>(column_of[c])];
      if (degrees && is_angle(static_cast<Channel>(c))) v *= std::numbers::pi / 180.0;
      q[c] = v;
    }
    out.samples.push_back(q);
    times.push_back(values[static_cast<std::size_t>(time_column)]);
  }
  if (!have_header) throw ParseError("empty file", row, 0);
  if (times.empty()) throw ParseError("no samples", row, 0);

  out.start_time = times.front();
  if (times.size() >= 2) {
    const double dt = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
    if (!(dt > 0.0)) throw ParseError("timestamps not increasing", 0, 1);
    for (std::size_t i = 1; i < times.size(); ++i) {
      const double step = times[i] - times[i - 1];
      if (std::abs(step - dt) > 1e-6 * std::max(1.0, dt) + 1e-9) {
        throw ParseError("non-uniform sampling", 0, 1);
      }
    }
    out.sample_rate = 1.0 / dt;
  }
  validate(out);
  return out;
}

void save_coords_csv(const std::filesystem::path& path, const GeneralizedCoords& coords) {
  std::string text = "# units: m,rad\nt";
  for (auto name : kChannelNames) {
    text += ',';
    text += name;
  }
  text += '\n';
  for (std::size_t i = 0; i < coords.size(); ++i) {
    text += io::format_double(coords.time(i));
    for (double v : coords.samples[i]) {
      text += ',';
      text += io::format_double(v);
    }
    text += '\n';
  }
  io::write_text(path, text);
}

GeneralizedCoords smooth(const GeneralizedCoords& coords, int span) {
  if (span < 1) throw std::invalid_argument("smooth: span must be >= 1");
  const std::size_t n = coords.size();
  if (static_cast<std::size_t>(span) > n) {
    throw std::invalid_argument("smooth: span exceeds sample count");
  }
  const std::size_t before = static_cast<std::size_t>(span - 1) / 2;
  const std::size_t after = static_cast<std::size_t>(span - 1) - before;

  GeneralizedCoords out = coords;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t lo = 0;
    std::size_t hi = 0;
    if (i >= before && i + after < n) {
      lo = i - before;
      hi = i + after;
    } else {
      const std::size_t h = std::min({i, n - 1 - i, after});
      lo = i - h;
      hi = i + h;
    }
    const double inv = 1.0 / static_cast<double>(hi - lo + 1);
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      double sum = 0.0;
      for (std::size_t j = lo; j <= hi; ++j) sum += coords.samples[j][c];
      out.samples[i][c] = sum * inv;
    }
  }
  return out;
}

GeneralizedCoords resample(const GeneralizedCoords& coords, double start_time, double rate,
                           std::size_t count) {
  if (!(rate > 0.0)) throw std::invalid_argument("resample: rate must be > 0");
  if (coords.size() < 2) throw std::invalid_argument("resample: need at least two samples");
  GeneralizedCoords out;
  out.sample_rate = rate;
  out.start_time = start_time;
  out.samples.resize(count);
  const double eps = 1e-9 / coords.sample_rate;
  for (std::size_t k = 0; k < count; ++k) {
    const double t = out.time(k);
    if (t < coords.start_time - eps || t > coords.end_time() + eps) {
      throw std::out_of_range("resample: time " + std::to_string(t) +
                              " s outside the sampled motion range");
    }
    const double x = std::clamp((t - coords.start_time) * coords.sample_rate, 0.0,
                                static_cast<double>(coords.size() - 1));
    const auto i0 = std::min(static_cast<std::size_t>(x), coords.size() - 2);
    const double f = x - static_cast<double>(i0);
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      out.samples[k][c] = (1.0 - f) * coords.samples[i0][c] + f * coords.samples[i0 + 1][c];
    }
  }
  return out;
}

const std::vector<RigidPose>& segment_poses(const SegmentTrajectory& traj, Segment s) {
  return s == Segment::kThigh ? traj.thigh : traj.shank;
}

SegmentTrajectory forward_kinematics(const GeneralizedCoords& coords, const Anthropometry& body) {
  if (!(body.thigh_length > 0.0) || !(body.shank_length > 0.0)) {
    throw std::invalid_argument("forward_kinematics: segment lengths must be > 0");
  }
  SegmentTrajectory traj;
  traj.sample_rate = coords.sample_rate;
  traj.start_time = coords.start_time;
  const std::size_t n = coords.size();
  traj.thigh.resize(n);
  traj.shank.resize(n);
  traj.hip.resize(n);
  traj.knee.resize(n);
  traj.ankle.resize(n);

  const Vec3 thigh_axis(0.0, -body.thigh_length, 0.0);
  const Vec3 shank_axis(0.0, -body.shank_length, 0.0);
  const RigidPose to_knee = RigidPose::from_translation(thigh_axis);
  for (std::size_t i = 0; i < n; ++i) {
    const CoordSample& q = coords.samples[i];
    auto get = [&q](Channel c) { return q[static_cast<std::size_t>(c)]; };
    const RigidPose root(
        rotation_from_euler_xyz({get(Channel::kRootRx), get(Channel::kRootRy), get(Channel::kRootRz)}),
        Vec3(get(Channel::kRootX), get(Channel::kRootY), get(Channel::kRootZ)));
    const RigidPose hip = RigidPose::from_rotation(
        rotation_from_euler_xyz({get(Channel::kHipAdd), get(Channel::kHipRot), get(Channel::kHipFlex)}));
    const RigidPose knee = RigidPose::from_rotation(
        rotation_from_axis_angle(Vec3::UnitZ(), -get(Channel::kKneeFlex)));

    traj.thigh[i] = root * hip;
    traj.shank[i] = traj.thigh[i] * to_knee * knee;
    traj.hip[i] = traj.thigh[i].translation();
    traj.knee[i] = traj.thigh[i].apply(thigh_axis);
    traj.ankle[i] = traj.shank[i].apply(shank_axis);
  }
  return traj;
}

}  // namespace imumoco
