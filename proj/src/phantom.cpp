#include "imumoco/phantom.hpp"

#include "imumoco/io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace imumoco {

void validate(const Primitive& p) {
  for (int k = 0; k < 3; ++k) {
    if (!std::isfinite(p.semi_axes[k]) || !(p.semi_axes[k] > 0.0)) {
      throw std::invalid_argument("primitive '" + p.name + "': semi-axes must be > 0");
    }
  }
  if (!p.center.allFinite() || !std::isfinite(p.delta_mu)) {
    throw std::invalid_argument("primitive '" + p.name + "': non-finite parameter");
  }
}

PosedEllipsoid::PosedEllipsoid(const RigidPose& world_from_local, const Vec3& semi_axes,
                               double delta_mu)
    : pose_(world_from_local), semi_(semi_axes), delta_mu_(delta_mu) {
  to_unit_ = semi_.cwiseInverse().asDiagonal() * pose_.rotation().matrix().transpose();
}

double PosedEllipsoid::chord(const Vec3& origin, const Vec3& dir) const {
  const Vec3 o = to_unit_ * (origin - pose_.translation());
  const Vec3 d = to_unit_ * dir;
  const double a = d.squaredNorm();
  const double b = o.dot(d);
  const double c = o.squaredNorm() - 1.0;
  const double disc = b * b - a * c;
  if (disc <= 0.0) return 0.0;
  const double root = std::sqrt(disc);
  // Stable roots of a t^2 + 2 b t + c = 0.
  const double q = b >= 0.0 ? -(b + root) : -(b - root);
  double t0 = q / a;
  double t1 = q != 0.0 ? c / q : -t0;
  if (t0 > t1) std::swap(t0, t1);
  if (t1 <= 0.0) return 0.0;
  return t1 - std::max(t0, 0.0);
}

bool PosedEllipsoid::contains(const Vec3& x) const {
  return (to_unit_ * (x - pose_.translation())).squaredNorm() <= 1.0;
}

std::vector<Primitive> default_leg_phantom() {
  // Attenuation (1/mm): soft tissue 0.02, cortical bone +0.03 over tissue,
  // marrow -0.015 inside bone. Synthetic values near 60 keV.
  constexpr double kTissue = 0.02;
  constexpr double kBone = 0.03;
  constexpr double kMarrow = -0.015;
  const auto thigh = Segment::kThigh;
  const auto shank = Segment::kShank;
  auto prim = [](std::string name, Segment parent, Vec3 c, Vec3 s, double mu) {
    return Primitive{std::move(name), parent, c, s, Rotation3::identity(), mu};
  };
  return {
      prim("thigh_tissue", thigh, {0.0, -300.0, 0.0}, {68.0, 135.0, 68.0}, kTissue),
      prim("femur_shaft", thigh, {0.0, -230.0, 0.0}, {16.0, 140.0, 16.0}, kBone),
      prim("femur_marrow", thigh, {0.0, -230.0, 0.0}, {9.0, 120.0, 9.0}, kMarrow),
      prim("femur_condyles", thigh, {0.0, -395.0, 0.0}, {24.0, 22.0, 36.0}, kBone),
      prim("patella", thigh, {45.0, -400.0, 0.0}, {10.0, 22.0, 18.0}, kBone),
      prim("shank_tissue", shank, {0.0, -100.0, 0.0}, {58.0, 120.0, 58.0}, kTissue),
      prim("tibia_plateau", shank, {0.0, -25.0, 0.0}, {24.0, 20.0, 34.0}, kBone),
      prim("tibia_shaft", shank, {0.0, -170.0, 0.0}, {15.0, 125.0, 15.0}, kBone),
      prim("tibia_marrow", shank, {0.0, -170.0, 0.0}, {8.0, 110.0, 8.0}, kMarrow),
      prim("fibula", shank, {-5.0, -180.0, 25.0}, {7.0, 120.0, 7.0}, kBone),
  };
}

PosedPhantom pose_phantom(const std::vector<Primitive>& primitives, const RigidPose& thigh_mm,
                          const RigidPose& shank_mm) {
  PosedPhantom out;
  out.ellipsoids.reserve(primitives.size());
  out.names.reserve(primitives.size());
  for (const auto& p : primitives) {
    validate(p);
    const RigidPose& seg = p.parent == Segment::kThigh ? thigh_mm : shank_mm;
    out.ellipsoids.emplace_back(seg * RigidPose(p.orientation, p.center), p.semi_axes, p.delta_mu);
    out.names.push_back(p.name);
  }
  return out;
}

PosedPhantom pose_at(const std::vector<Primitive>& primitives, const SegmentTrajectory& traj,
                     std::size_t index) {
  if (index >= traj.size()) throw std::out_of_range("pose_at: time index out of range");
  return pose_phantom(primitives, traj.thigh[index].scaled_translation(1000.0),
                      traj.shank[index].scaled_translation(1000.0));
}

double line_integral(const PosedPhantom& phantom, const Vec3& origin, const Vec3& dir) {
  double sum = 0.0;
  for (const auto& e : phantom.ellipsoids) sum += e.delta_mu() * e.chord(origin, dir);
  return sum;
}

double attenuation_at(const PosedPhantom& phantom, const Vec3& x) {
  double mu = 0.0;
  for (const auto& e : phantom.ellipsoids) {
    if (e.contains(x)) mu += e.delta_mu();
  }
  return mu;
}

std::vector<Primitive> parse_phantom(std::string_view text) {
  std::vector<Primitive> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const std::string_view view = io::trim(line);
    if (view.empty() || view.front() == '#') continue;
    std::istringstream fields{std::string(view)};
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.size() != 12) throw ParseError("expected 12 fields", row, 0);
    Primitive p;
    p.name = tok[0];
    if (tok[1] == "thigh") p.parent = Segment::kThigh;
    else if (tok[1] == "shank") p.parent = Segment::kShank;
    else throw ParseError("parent must be thigh or shank", row, 2);
    double v[10];
    for (std::size_t j = 0; j < 10; ++j) {
      if (!io::parse_double(tok[j + 2], v[j])) throw ParseError("non-numeric field", row, j + 3);
    }
    constexpr double deg = std::numbers::pi / 180.0;
    p.center = Vec3(v[0], v[1], v[2]);
    p.semi_axes = Vec3(v[3], v[4], v[5]);
    p.orientation = rotation_from_euler_xyz(Vec3(v[6], v[7], v[8]) * deg);
    p.delta_mu = v[9];
    try {
      validate(p);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), row, 0);
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Primitive> load_phantom(const std::filesystem::path& path) {
  return parse_phantom(io::read_text(path));
}

std::string format_phantom(const std::vector<Primitive>& primitives) {
  std::string text = "# name parent cx cy cz ax ay az rx ry rz delta_mu\n";
  constexpr double deg = 180.0 / std::numbers::pi;
  for (const auto& p : primitives) {
    const Mat3& r = p.orientation.matrix();
    // Inverse of R = Rx(a) Ry(b) Rz(c).
    const double b = std::asin(std::clamp(r(0, 2), -1.0, 1.0));
    const double a = std::atan2(-r(1, 2), r(2, 2));
    const double c = std::atan2(-r(0, 1), r(0, 0));
    text += p.name + (p.parent == Segment::kThigh ? " thigh" : " shank");
    for (double v : {p.center.x(), p.center.y(), p.center.z(), p.semi_axes.x(), p.semi_axes.y(),
                     p.semi_axes.z(), a * deg, b * deg, c * deg, p.delta_mu}) {
      text += ' ' + io::format_double(v);
    }
    text += '\n';
  }
  return text;
}

}  // namespace imumoco
