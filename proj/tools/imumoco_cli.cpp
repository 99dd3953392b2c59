#include "imumoco/experiment.hpp"
#include "imumoco/io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

using namespace imumoco;

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct ConfigSource {
  std::string file;
  std::vector<std::string> overrides;  // key=value
  std::string seed;
  std::string preset;
  std::string workers;
};

void add_config_options(CLI::App* cmd, ConfigSource& src) {
  cmd->add_option("-c,--config", src.file, "key=value config file");
  cmd->add_option("-s,--set", src.overrides, "override one key (key=value), repeatable");
  cmd->add_option("--seed", src.seed, "shorthand for --set seed=N");
  cmd->add_option("--preset", src.preset, "tiny, desk or full");
  cmd->add_option("--workers", src.workers, "worker threads (0 = hardware)");
}

// Flag > file > default.
ExperimentConfig load_config(const ConfigSource& src) {
  std::map<std::string, std::string> values;
  if (!src.file.empty()) {
    try {
      values = io::parse_key_values(io::read_text(src.file));
    } catch (const std::exception& e) {
      throw ConfigError(src.file + ": " + e.what());
    }
    // Relative motion CSV paths resolve against the config file.
    if (auto it = values.find("motion_csv"); it != values.end() && std::filesystem::path(it->second).is_relative()) {
      it->second = (std::filesystem::path(src.file).parent_path() / it->second).string();
    }
  }
  for (const auto& kv : src.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
    values[std::string(io::trim(kv.substr(0, eq)))] = std::string(io::trim(kv.substr(eq + 1)));
  }
  if (!src.seed.empty()) values["seed"] = src.seed;
  if (!src.preset.empty()) values["preset"] = src.preset;
  if (!src.workers.empty()) values["workers"] = src.workers;
  return make_config(values);
}

int cmd_run(const ConfigSource& src, const std::string& out, bool exact, bool no_stacks) {
  const ExperimentConfig config = load_config(src);
  std::fprintf(stderr, "config %s, geometry %s\n", config.hash().substr(0, 16).c_str(),
               config.geometry.hash().c_str());
  RunOptions opts;
  opts.exact_arm = exact;
  ExperimentResult result;
  try {
    result = run_experiment(config, opts);
  } catch (const StageError& e) {
    write_failure_manifest(config, e, out);
    throw;
  }
  write_outputs(result, out, !no_stacks);
  std::cout << csv_header() << '\n';
  for (const auto& arm : result.arms) std::cout << to_csv_row(arm.report) << '\n';
  return 0;
}

int cmd_compare(const std::vector<std::string>& paths) {
  std::vector<std::vector<QualityReport>> runs;
  for (const auto& p : paths) {
    std::filesystem::path path = p;
    if (std::filesystem::is_directory(path)) path /= "manifest.txt";
    runs.push_back(manifest_results(io::read_text(path)));
  }
  std::cout << format_summary(aggregate(runs));
  return 0;
}

int cmd_render_slices(const std::string& volume, const std::string& out, const std::string& prefix,
                      const std::vector<double>& iso) {
  const VoxelVolume vol = load_volume(volume);
  const double half = vol.spacing() * static_cast<double>(vol.n() - 1) / 2.0;
  Vec3 center = vol.origin() + Vec3::Constant(half);
  if (iso.size() == 3) center = Vec3(iso[0], iso[1], iso[2]);
  write_slices(normalize(vol), center, out, prefix);
  return 0;
}

int cmd_export_tracks(const ConfigSource& src, const std::string& out) {
  const ExperimentConfig config = load_config(src);
  const ExperimentResult r = simulate_tracks(config);
  std::filesystem::create_directories(out);
  save_coords_csv(std::filesystem::path(out) / "coords.csv", r.coords);
  save_imu_csv(std::filesystem::path(out) / "imu.csv", r.imu);
  save_track_csv(std::filesystem::path(out) / "exact.csv", r.exact_mm, "mm");
  save_track_csv(std::filesystem::path(out) / "proposed.csv", r.proposed_mm, "mm");
  save_track_csv(std::filesystem::path(out) / "marker.csv", r.marker_mm, "mm");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IMU-based motion compensation for weight-bearing cone-beam CT (simulation)"};
  app.require_subcommand(1);

  ConfigSource run_src;
  std::string run_out = "out";
  bool run_exact = false;
  bool run_no_stacks = false;
  auto* run = app.add_subcommand("run", "run the full experiment");
  add_config_options(run, run_src);
  run->add_option("-o,--out", run_out, "output directory");
  run->add_flag("--exact", run_exact, "also reconstruct with the true shank motion");
  run->add_flag("--no-stacks", run_no_stacks, "skip writing projection stacks");

  std::vector<std::string> manifests;
  auto* compare = app.add_subcommand("compare", "aggregate results over runs");
  compare->add_option("manifests", manifests, "manifest files or run directories")->required();

  std::string volume;
  std::string slices_out = "slices";
  std::string prefix = "volume";
  std::vector<double> iso;
  auto* render = app.add_subcommand("render-slices", "write axial and sagittal slices of a volume");
  render->add_option("volume", volume, "volume base path (without .raw/.txt)")->required();
  render->add_option("-o,--out", slices_out, "output directory");
  render->add_option("--prefix", prefix, "file name prefix");
  render->add_option("--iso", iso, "knee center x y z in mm")->expected(3);

  ConfigSource tracks_src;
  std::string tracks_out = "tracks";
  auto* tracks = app.add_subcommand("export-tracks", "write motion, IMU and motion tracks only");
  add_config_options(tracks, tracks_src);
  tracks->add_option("-o,--out", tracks_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_src, run_out, run_exact, run_no_stacks);
    if (*compare) return cmd_compare(manifests);
    if (*render) return cmd_render_slices(volume, slices_out, prefix, iso);
    if (*tracks) return cmd_export_tracks(tracks_src, tracks_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const StageError& e) {
    std::cerr << "stage '" << e.stage() << "' failed: " << e.what() << '\n';
    return kExitStage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    // Malformed or mismatched manifests and volumes.
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return 0;
}
