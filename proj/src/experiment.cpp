#include "imumoco/experiment.hpp"

#include "imumoco/io.hpp"
#include "imumoco/parallel.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <charconv>
#include <cstdio>
#include <numbers>
#include <set>
#include <sstream>

namespace imumoco {
namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr const char* kVersion = "0.1.0";

struct SwayKey {
  const char* key;
  Channel channel;
  double unit;  // config unit -> internal (mm -> m, deg -> rad)
};

constexpr SwayKey kSwayKeys[] = {
    {"sway.root_x_mm", Channel::kRootX, 1e-3},       {"sway.root_y_mm", Channel::kRootY, 1e-3},
    {"sway.root_z_mm", Channel::kRootZ, 1e-3},       {"sway.root_rx_deg", Channel::kRootRx, kDeg},
    {"sway.root_ry_deg", Channel::kRootRy, kDeg},    {"sway.root_rz_deg", Channel::kRootRz, kDeg},
    {"sway.hip_flex_deg", Channel::kHipFlex, kDeg},  {"sway.hip_add_deg", Channel::kHipAdd, kDeg},
    {"sway.hip_rot_deg", Channel::kHipRot, kDeg},    {"sway.knee_flex_deg", Channel::kKneeFlex, kDeg},
};

const char* preset_name(Preset p) {
  switch (p) {
    case Preset::kTiny: return "tiny";
    case Preset::kDesk: return "desk";
    case Preset::kFull: return "full";
  }
  return "desk";
}

double to_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  if (!io::parse_double(value, v) || !std::isfinite(v)) {
    throw ConfigError("config key '" + key + "': '" + value + "' is not a number");
  }
  return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw ConfigError("config key '" + key + "': '" + value + "' is not a non-negative integer");
  }
  return v;
}

Vec3 to_vec3(const std::string& key, const std::string& value) {
  const auto parts = io::split(value, ',');
  if (parts.size() != 3) throw ConfigError("config key '" + key + "': expected x,y,z");
  Vec3 v;
  for (std::size_t a = 0; a < 3; ++a) v[static_cast<Eigen::Index>(a)] = to_double(key, std::string(io::trim(parts[a])));
  return v;
}

std::string vec3_text(const Vec3& v) {
  return io::format_double(v.x()) + ',' + io::format_double(v.y()) + ',' + io::format_double(v.z());
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Runs `fn`, recording its duration and wrapping failures with the stage name.
template <typename Fn>
auto stage(ExperimentResult& result, const std::string& name, Fn&& fn) {
  const auto t0 = Clock::now();
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      result.timings[name] += seconds_since(t0);
    } else {
      auto value = fn();
      result.timings[name] += seconds_since(t0);
      return value;
    }
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::vector<RigidPose> to_mm(const std::vector<RigidPose>& poses) {
  std::vector<RigidPose> out;
  out.reserve(poses.size());
  for (const auto& p : poses) out.push_back(p.scaled_translation(1000.0));
  return out;
}

}  // namespace

SwayParams default_sway() {
  SwayParams s;
  s.channel(Channel::kRootX).amplitude = 3.0e-3;
  s.channel(Channel::kRootY).amplitude = 0.6e-3;
  s.channel(Channel::kRootZ).amplitude = 2.25e-3;
  s.channel(Channel::kRootRx).amplitude = 0.15 * kDeg;
  s.channel(Channel::kRootRy).amplitude = 0.15 * kDeg;
  s.channel(Channel::kRootRz).amplitude = 0.15 * kDeg;
  s.channel(Channel::kHipFlex).amplitude = 0.6 * kDeg;
  s.channel(Channel::kHipAdd).amplitude = 0.3 * kDeg;
  s.channel(Channel::kHipRot).amplitude = 0.3 * kDeg;
  s.channel(Channel::kKneeFlex).amplitude = 0.75 * kDeg;
  return s;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys = {
      "seed", "preset", "workers", "motion_csv", "squat_deg", "smooth_span", "scan_start_s",
      "sway.frequency_hz", "sway.duration_s", "sway.rate_hz",
      "imu.position_m", "imu.accel_sigma", "imu.gyro_sigma", "imu.accel_bias", "imu.gyro_bias",
      "moco.rule", "moco.composition", "marker.sigma_px", "projector.subsamples",
      "volume.n", "volume.spacing_mm",
      "geometry.sdd_mm", "geometry.sid_mm", "geometry.cols", "geometry.rows",
      "geometry.pixel_pitch_mm", "geometry.n_views", "geometry.angular_step_deg",
      "geometry.frame_rate_hz"};
  for (const auto& k : kSwayKeys) keys.emplace_back(k.key);
  return keys;
}

ExperimentConfig make_config(const std::map<std::string, std::string>& values) {
  const auto known = config_keys();
  for (const auto& [key, value] : values) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  auto get = [&values](const std::string& key) -> const std::string* {
    const auto it = values.find(key);
    return it == values.end() ? nullptr : &it->second;
  };

  ExperimentConfig c;
  c.sway = default_sway();
  c.volume = VolumeSpec::desk(Vec3::Zero());

  const std::string* seed = get("seed");
  if (seed == nullptr) throw ConfigError("config key 'seed' is required");
  c.seed = to_uint("seed", *seed);

  if (const auto* v = get("preset")) {
    if (*v == "tiny") c.preset = Preset::kTiny;
    else if (*v == "desk") c.preset = Preset::kDesk;
    else if (*v == "full") c.preset = Preset::kFull;
    else throw ConfigError("config key 'preset': expected tiny, desk or full");
  }
  switch (c.preset) {
    case Preset::kTiny:
      c.geometry = ScanGeometry::tiny();
      c.volume = {64, 4.0, Vec3::Zero()};
      break;
    case Preset::kDesk:
      c.geometry = ScanGeometry::desk();
      c.volume = VolumeSpec::desk(Vec3::Zero());
      break;
    case Preset::kFull:
      c.geometry = ScanGeometry::full();
      c.volume = VolumeSpec::full(Vec3::Zero());
      break;
  }

  if (const auto* v = get("workers")) c.workers = static_cast<unsigned>(to_uint("workers", *v));
  if (const auto* v = get("squat_deg")) c.squat_deg = to_double("squat_deg", *v);
  if (const auto* v = get("smooth_span")) {
    c.smooth_span = static_cast<int>(to_uint("smooth_span", *v));
    if (c.smooth_span < 1) throw ConfigError("config key 'smooth_span' must be >= 1");
  }
  if (const auto* v = get("scan_start_s")) c.scan_start = to_double("scan_start_s", *v);

  bool sway_given = false;
  for (const auto& k : kSwayKeys) {
    if (const auto* v = get(k.key)) {
      c.sway.channel(k.channel).amplitude = std::abs(to_double(k.key, *v)) * k.unit;
      sway_given = true;
    }
  }
  if (const auto* v = get("sway.frequency_hz")) {
    const double f = to_double("sway.frequency_hz", *v);
    if (!(f > 0.0)) throw ConfigError("config key 'sway.frequency_hz' must be > 0");
    for (auto& ch : c.sway.channels) ch.frequency = f;
    sway_given = true;
  }
  if (const auto* v = get("sway.duration_s")) {
    c.sway.duration = to_double("sway.duration_s", *v);
    sway_given = true;
  }
  if (const auto* v = get("sway.rate_hz")) {
    c.sway.sample_rate = to_double("sway.rate_hz", *v);
    if (!(c.sway.sample_rate > 0.0)) throw ConfigError("config key 'sway.rate_hz' must be > 0");
  }
  if (const auto* v = get("motion_csv")) {
    if (sway_given) throw ConfigError("motion_csv and sway.* keys are mutually exclusive");
    c.motion_csv = *v;
  }

  if (const auto* v = get("imu.position_m")) c.mount.position = to_vec3("imu.position_m", *v);
  if (const auto* v = get("imu.accel_sigma")) c.imu_errors.accel_sigma = to_double("imu.accel_sigma", *v);
  if (const auto* v = get("imu.gyro_sigma")) c.imu_errors.gyro_sigma = to_double("imu.gyro_sigma", *v);
  if (const auto* v = get("imu.accel_bias")) c.imu_errors.accel_bias = to_vec3("imu.accel_bias", *v);
  if (const auto* v = get("imu.gyro_bias")) c.imu_errors.gyro_bias = to_vec3("imu.gyro_bias", *v);
  if (c.imu_errors.accel_sigma < 0.0 || c.imu_errors.gyro_sigma < 0.0) {
    throw ConfigError("IMU noise sigmas must be >= 0");
  }
  if (const auto* v = get("moco.rule")) {
    if (*v == "trapezoid") c.moco.rule = IntegrationRule::kTrapezoid;
    else if (*v == "rectangle") c.moco.rule = IntegrationRule::kRectangle;
    else throw ConfigError("config key 'moco.rule': expected trapezoid or rectangle");
  }
  if (const auto* v = get("moco.composition")) {
    if (*v == "left") c.moco.composition = MotionComposition::kLeftMultiply;
    else if (*v == "right") c.moco.composition = MotionComposition::kRightMultiply;
    else throw ConfigError("config key 'moco.composition': expected left or right");
  }
  if (const auto* v = get("marker.sigma_px")) {
    c.marker_sigma = to_double("marker.sigma_px", *v);
    if (c.marker_sigma < 0.0) throw ConfigError("config key 'marker.sigma_px' must be >= 0");
  }

  if (const auto* v = get("projector.subsamples")) {
    c.subsamples = static_cast<unsigned>(to_uint("projector.subsamples", *v));
    if (c.subsamples < 1 || c.subsamples > 16) throw ConfigError("config key 'projector.subsamples' must be in 1..16");
  }
  if (const auto* v = get("volume.n")) c.volume.n = to_uint("volume.n", *v);
  if (const auto* v = get("volume.spacing_mm")) c.volume.spacing = to_double("volume.spacing_mm", *v);
  if (c.volume.n < 8 || !(c.volume.spacing > 0.0)) throw ConfigError("volume needs n >= 8 and spacing > 0");

  auto& g = c.geometry;
  if (const auto* v = get("geometry.sdd_mm")) g.sdd = to_double("geometry.sdd_mm", *v);
  if (const auto* v = get("geometry.sid_mm")) g.sid = to_double("geometry.sid_mm", *v);
  if (const auto* v = get("geometry.cols")) g.cols = to_uint("geometry.cols", *v);
  if (const auto* v = get("geometry.rows")) g.rows = to_uint("geometry.rows", *v);
  if (const auto* v = get("geometry.pixel_pitch_mm")) g.pixel_pitch = to_double("geometry.pixel_pitch_mm", *v);
  if (const auto* v = get("geometry.n_views")) g.n_views = to_uint("geometry.n_views", *v);
  if (const auto* v = get("geometry.angular_step_deg")) g.angular_step_deg = to_double("geometry.angular_step_deg", *v);
  if (const auto* v = get("geometry.frame_rate_hz")) g.frame_rate = to_double("geometry.frame_rate_hz", *v);
  try {
    validate(g);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (g.rows < 2) throw ConfigError("geometry: need at least 2 detector rows");

  c.sway.squat_knee_flexion = c.squat_deg * kDeg;
  c.sway.scan_duration = c.scan_start + g.duration();
  return c;
}

std::string ExperimentConfig::canonical() const {
  std::map<std::string, std::string> kv;
  kv["seed"] = std::to_string(seed);
  kv["preset"] = preset_name(preset);
  kv["workers"] = std::to_string(workers);
  kv["squat_deg"] = io::format_double(squat_deg);
  kv["smooth_span"] = std::to_string(smooth_span);
  kv["scan_start_s"] = io::format_double(scan_start);
  if (motion_csv) {
    kv["motion_csv"] = motion_csv->filename().string();
    kv["motion_csv.sha256"] = std::filesystem::exists(*motion_csv) ? io::sha256_file(*motion_csv) : "missing";
  } else {
    for (const auto& k : kSwayKeys) kv[k.key] = io::format_double(sway.channel(k.channel).amplitude / k.unit);
    kv["sway.frequency_hz"] = io::format_double(sway.channels[0].frequency);
    kv["sway.duration_s"] = io::format_double(sway.duration);
    kv["sway.rate_hz"] = io::format_double(sway.sample_rate);
  }
  kv["imu.position_m"] = vec3_text(mount.position);
  kv["imu.accel_sigma"] = io::format_double(imu_errors.accel_sigma);
  kv["imu.gyro_sigma"] = io::format_double(imu_errors.gyro_sigma);
  kv["imu.accel_bias"] = vec3_text(imu_errors.accel_bias);
  kv["imu.gyro_bias"] = vec3_text(imu_errors.gyro_bias);
  kv["moco.rule"] = moco.rule == IntegrationRule::kTrapezoid ? "trapezoid" : "rectangle";
  kv["moco.composition"] = moco.composition == MotionComposition::kLeftMultiply ? "left" : "right";
  kv["marker.sigma_px"] = io::format_double(marker_sigma);
  kv["projector.subsamples"] = std::to_string(subsamples);
  kv["volume.n"] = std::to_string(volume.n);
  kv["volume.spacing_mm"] = io::format_double(volume.spacing);
  kv["geometry.sdd_mm"] = io::format_double(geometry.sdd);
  kv["geometry.sid_mm"] = io::format_double(geometry.sid);
  kv["geometry.cols"] = std::to_string(geometry.cols);
  kv["geometry.rows"] = std::to_string(geometry.rows);
  kv["geometry.pixel_pitch_mm"] = io::format_double(geometry.pixel_pitch);
  kv["geometry.n_views"] = std::to_string(geometry.n_views);
  kv["geometry.angular_step_deg"] = io::format_double(geometry.angular_step_deg);
  kv["geometry.frame_rate_hz"] = io::format_double(geometry.frame_rate);
  std::string text;
  for (const auto& [k, v] : kv) text += k + '=' + v + '\n';
  return text;
}

std::string ExperimentConfig::hash() const { return io::sha256_hex(canonical()); }

ExperimentResult simulate_tracks(const ExperimentConfig& config) {
  ExperimentResult r;
  r.config = config;
  const ScanGeometry& g = config.geometry;

  GeneralizedCoords raw = stage(r, "motion", [&] {
    GeneralizedCoords c = config.motion_csv ? load_coords_csv(*config.motion_csv)
                                            : generate_sway(config.sway, config.seed);
    validate(c);
    return c;
  });
  r.coords = stage(r, "motion", [&] { return smooth(raw, config.smooth_span); });
  const double rate = r.coords.sample_rate;
  const double last_view = config.scan_start + static_cast<double>(g.n_views - 1) / g.frame_rate;
  if (config.scan_start < r.coords.start_time || last_view > r.coords.end_time()) {
    throw StageError("motion", "motion record [" + std::to_string(r.coords.start_time) + ", " +
                                   std::to_string(r.coords.end_time()) + "] s does not cover the scan [" +
                                   std::to_string(config.scan_start) + ", " + std::to_string(last_view) + "] s");
  }
  const double start_index = (config.scan_start - r.coords.start_time) * rate;
  const auto i0 = static_cast<std::size_t>(std::llround(start_index));
  if (std::abs(start_index - static_cast<double>(i0)) > 1e-6) {
    throw ConfigError("scan_start_s must fall on a motion sample");
  }

  const SegmentTrajectory traj = stage(r, "kinematics", [&] { return forward_kinematics(r.coords); });
  r.view_traj = stage(r, "kinematics", [&] {
    return forward_kinematics(resample(r.coords, config.scan_start, g.frame_rate, g.n_views));
  });
  r.isocenter = r.view_traj.knee[0] * 1000.0;
  r.config.geometry.isocenter = r.isocenter;
  r.config.volume.center = r.isocenter;
  const ScanGeometry& geom = r.config.geometry;

  const RigidPose shank0_inv = r.view_traj.shank[0].inverse();
  for (const auto& s : r.view_traj.shank) r.exact_mm.push_back((s * shank0_inv).scaled_translation(1000.0));

  const auto sensor = sensor_world_poses(traj, config.mount);
  r.imu = stage(r, "imu", [&] {
    auto samples = simulate_imu(traj, config.mount);
    const auto& e = config.imu_errors;
    if (e.accel_sigma > 0.0 || e.gyro_sigma > 0.0 || !e.accel_bias.isZero(0.0) || !e.gyro_bias.isZero(0.0)) {
      ImuErrorModel model = e;
      model.seed = config.seed ^ 0x9E3779B97F4A7C15ull;
      samples = corrupt(samples, model);
    }
    return std::vector<ImuSample>(samples.begin() + static_cast<std::ptrdiff_t>(i0), samples.end());
  });

  r.proposed_mm = stage(r, "moco", [&] {
    std::vector<double> ct_times(geom.n_views);
    for (std::size_t k = 0; k < geom.n_views; ++k) ct_times[k] = config.scan_start + geom.view_time(k);
    const Vec3 v0 = sensor_velocity(sensor, rate, i0);
    const MotionTrack track = estimate_track(r.imu, sensor[i0], v0, ct_times, config.moco);
    return to_mm(track.motion);
  });

  r.marker_mm = stage(r, "markers", [&] {
    const auto markers = default_markers();
    const auto detections = project_markers(markers, r.view_traj, geom, config.marker_sigma, config.seed + 7);
    const auto reference = marker_positions(markers, r.view_traj, 0);
    const auto matrices = build_trajectory(geom);
    const PoseEstimate est = estimate_motion(detections, reference, matrices);
    r.marker_condition = est.condition;
    return est.motion;
  });
  return r;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  ExperimentResult r = simulate_tracks(config);
  const ScanGeometry& geom = r.config.geometry;
  const auto phantom = default_leg_phantom();

  const ProjectionStack static_stack = stage(r, "projection", [&] {
    return render_scan(phantom, r.view_traj, geom, false, config.workers, config.subsamples);
  });
  const ProjectionStack moving_stack = stage(r, "projection", [&] {
    return render_scan(phantom, r.view_traj, geom, true, config.workers, config.subsamples);
  });

  ReconOptions ro;
  ro.volume = r.config.volume;
  ro.workers = config.workers;
  // Every arm is reconstructed on the voxels that all arms' matrices see in every view.
  ro.support = stage(r, "reconstruction", [&] {
    std::vector<std::optional<std::vector<RigidPose>>> tracks = {std::nullopt, r.proposed_mm, r.marker_mm};
    if (options.exact_arm) tracks.emplace_back(r.exact_mm);
    std::vector<char> support;
    for (const auto& t : tracks) {
      const auto fov = field_of_view_mask(view_matrices(geom, t), geom, ro.volume);
      if (support.empty()) support = fov;
      for (std::size_t i = 0; i < support.size(); ++i) support[i] = support[i] && fov[i];
    }
    return support;
  });
  auto recon = [&](const ProjectionStack& stack, const std::optional<std::vector<RigidPose>>& motion) {
    return stage(r, "reconstruction", [&] { return reconstruct(stack, geom, motion, ro); });
  };
  r.reference = recon(static_stack, std::nullopt);
  std::vector<std::pair<std::string, VoxelVolume>> volumes;
  volumes.emplace_back("uncorrected", recon(moving_stack, std::nullopt));
  volumes.emplace_back("proposed", recon(moving_stack, r.proposed_mm));
  volumes.emplace_back("marker", recon(moving_stack, r.marker_mm));
  if (options.exact_arm) volumes.emplace_back("exact", recon(moving_stack, r.exact_mm));

  stage(r, "metrics", [&] {
    const VoxelVolume ref = normalize(r.reference);
    r.mask = background_mask(ref);
    for (auto& [name, vol] : volumes) {
      r.arms.push_back({evaluate(name, ref, vol, r.mask), std::move(vol)});
    }
    const QualityReport uncorrected = r.arms.front().report;
    for (auto& arm : r.arms) set_improvement(arm.report, uncorrected);
  });
  r.static_stack = static_stack;
  r.moving_stack = moving_stack;
  return r;
}

void write_slices(const VoxelVolume& normalized, const Vec3& isocenter, const std::filesystem::path& dir,
                  const std::string& prefix) {
  std::filesystem::create_directories(dir);
  const std::size_t n = normalized.n();
  auto index_of = [&](double coord, int axis) {
    const double f = (coord - normalized.origin()[axis]) / normalized.spacing();
    return static_cast<std::size_t>(std::clamp(std::llround(f), 0LL, static_cast<long long>(n - 1)));
  };
  const double offset = 40.0;  // mm above/below the knee center
  const struct {
    const char* name;
    SliceAxis axis;
    std::size_t index;
  } slices[] = {
      {"shank_axial", SliceAxis::kY, index_of(isocenter.y() - offset, 1)},
      {"thigh_axial", SliceAxis::kY, index_of(isocenter.y() + offset, 1)},
      {"sagittal", SliceAxis::kZ, index_of(isocenter.z(), 2)},
  };
  for (const auto& s : slices) {
    const Slice img = extract_slice(normalized, s.axis, s.index);
    io::write_pgm16(dir / (prefix + "_" + s.name + ".pgm"), img.pixels, img.width, img.height, 0.0, 1.0);
  }
}

namespace {

std::string manifest_header(const ExperimentConfig& config, const std::string& status) {
  std::string text = "manifest_version=1\n";
  text += "status=" + status + '\n';
  text += "config_hash=" + config.hash() + '\n';
  text += "seed=" + std::to_string(config.seed) + '\n';
  text += "workers=" + std::to_string(config.workers) + '\n';
  text += "geometry_hash=" + config.geometry.hash() + '\n';
  text += "version.imumoco=" + std::string(kVersion) + '\n';
  text += "version.eigen=" + std::to_string(EIGEN_WORLD_VERSION) + '.' + std::to_string(EIGEN_MAJOR_VERSION) +
          '.' + std::to_string(EIGEN_MINOR_VERSION) + '\n';
  text += "version.fft=" + fft_library_version() + '\n';
  text += "version.hash=" + io::crypto_library_version() + '\n';
  return text;
}

std::string file_inventory(const std::filesystem::path& dir) {
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = std::filesystem::relative(entry.path(), dir).generic_string();
    if (rel == "manifest.txt" || rel == "timings.txt") continue;
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  std::string text;
  for (const auto& f : files) text += "file." + f + '=' + io::sha256_file(dir / f) + '\n';
  return text;
}

}  // namespace

std::string write_failure_manifest(const ExperimentConfig& config, const StageError& error,
                                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::write_text(dir / "config.txt", config.canonical());
  std::string message = error.what();
  std::replace(message.begin(), message.end(), '\n', ' ');
  std::string text = manifest_header(config, "failed");
  text += "failed_stage=" + error.stage() + '\n';
  text += "error=" + message + '\n';
  text += file_inventory(dir);
  io::write_text(dir / "manifest.txt", text);
  return text;
}

std::string write_manifest(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::string text = manifest_header(result.config, "complete");
  for (const auto& arm : result.arms) {
    const auto& q = arm.report;
    text += "result." + q.arm + ".ssim=" + io::format_double(q.ssim) + '\n';
    text += "result." + q.arm + ".rmse=" + io::format_double(q.rmse) + '\n';
    text += "result." + q.arm + ".ssim_improvement_pct=" + io::format_double(q.ssim_improvement_pct) + '\n';
    text += "result." + q.arm + ".rmse_improvement_pct=" + io::format_double(q.rmse_improvement_pct) + '\n';
  }
  text += file_inventory(dir);
  io::write_text(dir / "manifest.txt", text);
  return text;
}

std::string write_outputs(const ExperimentResult& r, const std::filesystem::path& dir, bool include_stacks) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (const char* sub : {"motion", "tracks", "geometry", "volumes", "slices", "reports"}) {
    fs::create_directories(dir / sub);
  }
  io::write_text(dir / "config.txt", r.config.canonical());
  save_coords_csv(dir / "motion" / "coords.csv", r.coords);
  save_imu_csv(dir / "motion" / "imu.csv", r.imu);
  save_track_csv(dir / "tracks" / "exact.csv", r.exact_mm, "mm");
  save_track_csv(dir / "tracks" / "proposed.csv", r.proposed_mm, "mm");
  save_track_csv(dir / "tracks" / "marker.csv", r.marker_mm, "mm");
  const auto matrices = build_trajectory(r.config.geometry);
  save_matrices_csv(dir / "geometry" / "matrices.csv", matrices);
  io::write_text(dir / "geometry" / "geometry.txt", r.config.geometry.describe());
  if (include_stacks && r.static_stack.n_views() > 0) {
    fs::create_directories(dir / "stacks");
    save_stack(dir / "stacks" / "static", r.static_stack, r.config.geometry);
    save_stack(dir / "stacks" / "moving", r.moving_stack, r.config.geometry);
    save_view_pgm(dir / "stacks" / "moving_view0.pgm", r.moving_stack, 0);
  }
  if (!r.arms.empty()) {
    save_volume(dir / "volumes" / "static", r.reference);
    write_slices(normalize(r.reference), r.isocenter, dir / "slices", "static");
    std::string csv = csv_header() + '\n';
    for (const auto& arm : r.arms) {
      save_volume(dir / "volumes" / arm.report.arm, arm.volume);
      write_slices(normalize(arm.volume), r.isocenter, dir / "slices", arm.report.arm);
      io::write_text(dir / "reports" / (arm.report.arm + ".txt"), to_key_values(arm.report));
      if (arm.report.arm != "exact") csv += to_csv_row(arm.report) + '\n';
    }
    io::write_text(dir / "results.csv", csv);
  }
  std::string timings;
  for (const auto& [name, t] : r.timings) timings += name + '=' + io::format_double(t) + '\n';
  io::write_text(dir / "timings.txt", timings);
  return write_manifest(r, dir);
}

std::vector<QualityReport> manifest_results(const std::string& manifest_text) {
  const auto kv = io::parse_key_values(manifest_text);
  std::vector<QualityReport> out;
  std::map<std::string, std::size_t> index;
  for (const auto& [key, value] : kv) {
    if (key.rfind("result.", 0) != 0) continue;
    const auto dot = key.rfind('.');
    const std::string arm = key.substr(7, dot - 7);
    const std::string metric = key.substr(dot + 1);
    if (arm.empty() || dot <= 7) throw std::invalid_argument("manifest: malformed key '" + key + "'");
    auto it = index.find(arm);
    if (it == index.end()) {
      it = index.emplace(arm, out.size()).first;
      out.push_back(QualityReport{arm});
    }
    double v = 0.0;
    if (!io::parse_double(value, v)) throw std::invalid_argument("manifest: bad value for '" + key + "'");
    QualityReport& q = out[it->second];
    if (metric == "ssim") q.ssim = v;
    else if (metric == "rmse") q.rmse = v;
    else if (metric == "ssim_improvement_pct") q.ssim_improvement_pct = v;
    else if (metric == "rmse_improvement_pct") q.rmse_improvement_pct = v;
    else throw std::invalid_argument("manifest: unknown metric '" + metric + "'");
  }
  if (out.empty()) throw std::invalid_argument("manifest: no results");
  // Table order: uncorrected, proposed, marker, then anything else.
  auto rank = [](const std::string& a) {
    if (a == "uncorrected") return 0;
    if (a == "proposed") return 1;
    if (a == "marker") return 2;
    return 3;
  };
  std::stable_sort(out.begin(), out.end(), [&](const QualityReport& a, const QualityReport& b) {
    return rank(a.arm) < rank(b.arm);
  });
  return out;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

}  // namespace

std::vector<ArmSummary> aggregate(const std::vector<std::vector<QualityReport>>& runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate: no runs");
  const auto& first = runs.front();
  for (const auto& run : runs) {
    if (run.size() != first.size()) throw std::invalid_argument("aggregate: runs list different arms");
    for (std::size_t a = 0; a < run.size(); ++a) {
      if (run[a].arm != first[a].arm) throw std::invalid_argument("aggregate: runs list different arms");
    }
  }
  std::vector<ArmSummary> out;
  for (std::size_t a = 0; a < first.size(); ++a) {
    std::vector<double> ssim, rmse_v, si, ri;
    for (const auto& run : runs) {
      ssim.push_back(run[a].ssim);
      rmse_v.push_back(run[a].rmse);
      si.push_back(run[a].ssim_improvement_pct);
      ri.push_back(run[a].rmse_improvement_pct);
    }
    ArmSummary s;
    s.arm = first[a].arm;
    s.runs = runs.size();
    std::tie(s.ssim_mean, s.ssim_std) = mean_std(ssim);
    std::tie(s.rmse_mean, s.rmse_std) = mean_std(rmse_v);
    std::tie(s.ssim_improvement_mean, s.ssim_improvement_std) = mean_std(si);
    std::tie(s.rmse_improvement_mean, s.rmse_improvement_std) = mean_std(ri);
    out.push_back(s);
  }
  return out;
}

std::string format_summary(const std::vector<ArmSummary>& summary) {
  std::string text = "arm           runs  SSIM             RMSE             SSIM impr. %   RMSE impr. %\n";
  char line[256];
  for (const auto& s : summary) {
    std::snprintf(line, sizeof line, "%-12s  %4zu  %.3f +- %.3f  %.3f +- %.3f  %5.1f +- %4.1f  %5.1f +- %4.1f\n",
                  s.arm.c_str(), s.runs, s.ssim_mean, s.ssim_std, s.rmse_mean, s.rmse_std,
                  s.ssim_improvement_mean, s.ssim_improvement_std, s.rmse_improvement_mean,
                  s.rmse_improvement_std);
    text += line;
  }
  return text;
}

}  // namespace imumoco
