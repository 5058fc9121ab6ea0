#include "vesselbench/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

#include "vesselbench/rng.hpp"

namespace vb {
namespace {

using json = nlohmann::json;

constexpr double PI = 3.14159265358979323846;

struct Vec3 {
  double x = 0, y = 0, z = 0;
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    return n > 0 ? Vec3{x / n, y / n, z / n} : Vec3{0, 0, 1};
  }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
};

// Any unit vector perpendicular to d.
Vec3 perpendicular(const Vec3& d) {
  const Vec3 axis = std::fabs(d.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
  return d.cross(axis).normalized();
}

Vec3 rotate_about(const Vec3& v, const Vec3& axis, double angle) {
  // Rodrigues rotation, axis must be unit length.
  const double c = std::cos(angle), s = std::sin(angle);
  return v * c + axis.cross(v) * s + axis * (axis.dot(v) * (1.0 - c));
}

struct BranchGeometry {
  std::vector<Vec3> samples;  // dense points along the (possibly bent) axis
  int depth = 0;
  double radius = 0.0;
  Vec3 end, end_dir;
};

void validate(const PhantomConfig& cfg) {
  for (int a = 0; a < 3; ++a)
    if (cfg.shape[a] < 3) throw std::runtime_error("phantom: shape too small");
  if (cfg.root_radius < 1.0) throw std::runtime_error("phantom: root_radius must be >= 1 voxel");
  if (cfg.branching_depth < 0) throw std::runtime_error("phantom: branching_depth must be >= 0");
  if (!(cfg.radius_decay > 0.0) || cfg.radius_decay > 1.0)
    throw std::runtime_error("phantom: radius_decay must be in (0,1]");
  if (cfg.tortuosity < 0 || cfg.noise_std < 0)
    throw std::runtime_error("phantom: tortuosity and noise_std must be >= 0");
  const int margin = static_cast<int>(std::ceil(cfg.root_radius)) * 2 + 1;
  if (cfg.shape[0] <= margin || cfg.shape[1] <= margin)
    throw std::runtime_error("phantom: shape too small to contain root_radius");
}

bool inside(const Vec3& p, const std::array<int, 3>& shape) {
  return p.x >= 0 && p.y >= 0 && p.z >= 0 && p.x <= shape[0] - 1 && p.y <= shape[1] - 1 &&
         p.z <= shape[2] - 1;
}

// Samples one tube axis from `start` along `dir`, bending it with a sine wave
// of the configured amplitude. Truncated where it would leave the volume.
BranchGeometry trace_branch(const Vec3& start, const Vec3& dir, double length, double radius,
                            int depth, const PhantomConfig& cfg, Rng& rng) {
  BranchGeometry g;
  g.depth = depth;
  g.radius = radius;

  const Vec3 n1 = perpendicular(dir);
  const Vec3 n2 = dir.cross(n1).normalized();
  const double bend_orientation = rng.uniform(0.0, 2.0 * PI);
  const double period = std::max(4.0, length / rng.uniform(1.0, 2.0));
  const Vec3 bend_dir = n1 * std::cos(bend_orientation) + n2 * std::sin(bend_orientation);

  const double step = 0.25;
  Vec3 last_dir = dir;
  for (double t = 0.0;; t += step) {
    const double tt = std::min(t, length);
    const double offset = cfg.tortuosity * std::sin(2.0 * PI * tt / period);
    const Vec3 p = start + dir * tt + bend_dir * offset;
    if (!inside(p, cfg.shape)) break;  // truncate, do not discard
    if (!g.samples.empty()) last_dir = (p - g.samples.back()).normalized();
    g.samples.push_back(p);
    if (t >= length) break;
  }
  if (g.samples.empty()) g.samples.push_back(start);
  g.end = g.samples.back();
  g.end_dir = g.samples.size() > 1 ? last_dir : dir;
  return g;
}

}  // namespace

int effective_depth(const PhantomConfig& cfg) {
  int depth = cfg.branching_depth;
  while (depth > 0 && cfg.root_radius * std::pow(cfg.radius_decay, depth) < 0.5) --depth;
  return depth;
}

PhantomSample generate_phantom(const PhantomConfig& cfg) {
  validate(cfg);
  Rng rng(derive_seed(cfg.rng_seed, "phantom-geometry"));

  const int depth_max = effective_depth(cfg);
  const double nz = cfg.shape[2];
  const double root_len = depth_max == 0 ? nz - 1.0 : std::max(6.0, 0.30 * nz);

  std::vector<BranchGeometry> tree;
  const Vec3 root_start{(cfg.shape[0] - 1) / 2.0, (cfg.shape[1] - 1) / 2.0, 0.0};
  tree.push_back(trace_branch(root_start, Vec3{0, 0, 1}, root_len, cfg.root_radius, 0, cfg, rng));

  // Breadth-first expansion keeps the draw order (and so the whole tree)
  // independent of rasterization details.
  std::size_t head = 0;
  while (head < tree.size()) {
    const BranchGeometry parent = tree[head++];
    if (parent.depth >= depth_max) continue;
    const double child_radius = parent.radius * cfg.radius_decay;
    const double child_len = std::max(4.0, root_len * std::pow(0.7, parent.depth + 1));
    const double azimuth = rng.uniform(0.0, 2.0 * PI);
    for (int c = 0; c < 2; ++c) {
      const double polar = rng.uniform(20.0, 50.0) * PI / 180.0;
      const Vec3 n1 = perpendicular(parent.end_dir);
      const Vec3 swing = rotate_about(n1, parent.end_dir, azimuth + c * PI);
      const Vec3 child_dir = rotate_about(parent.end_dir, swing.cross(parent.end_dir).normalized(), polar).normalized();
      tree.push_back(trace_branch(parent.end, child_dir, child_len, child_radius,
                                  parent.depth + 1, cfg, rng));
    }
  }

  PhantomSample sample;
  sample.label = LabelVolume(cfg.shape, {1.0, 1.0, 1.0});
  sample.image = Volume3D(cfg.shape, {1.0, 1.0, 1.0});

  // Digitize centerlines, then stamp a ball around every centerline voxel so
  // the label is exactly {v : dist(v, centerline) <= radius} per branch.
  for (const BranchGeometry& g : tree) {
    PhantomBranch branch;
    branch.depth = g.depth;
    branch.radius = g.radius;
    for (const Vec3& p : g.samples) {
      const std::array<int, 3> vox{static_cast<int>(std::lround(p.x)),
                                   static_cast<int>(std::lround(p.y)),
                                   static_cast<int>(std::lround(p.z))};
      if (!sample.label.in_bounds(vox[0], vox[1], vox[2])) continue;
      if (branch.centerline.empty() || branch.centerline.back() != vox)
        branch.centerline.push_back(vox);
    }
    const int r_ceil = static_cast<int>(std::ceil(g.radius));
    const double r2 = g.radius * g.radius;
    for (const auto& c : branch.centerline) {
      for (int dz = -r_ceil; dz <= r_ceil; ++dz)
        for (int dy = -r_ceil; dy <= r_ceil; ++dy)
          for (int dx = -r_ceil; dx <= r_ceil; ++dx) {
            if (dx * dx + dy * dy + dz * dz > r2) continue;
            const int x = c[0] + dx, y = c[1] + dy, z = c[2] + dz;
            if (sample.label.in_bounds(x, y, z)) sample.label.at(x, y, z) = 1;
          }
    }
    sample.branches.push_back(std::move(branch));
  }

  Rng noise(derive_seed(cfg.rng_seed, "phantom-noise"));
  for (std::size_t i = 0; i < sample.image.data.size(); ++i) {
    double v = sample.label.data[i] ? cfg.vessel_intensity : cfg.background_intensity;
    if (cfg.noise_std > 0) v += noise.normal(0.0, cfg.noise_std);
    sample.image.data[i] = static_cast<float>(v);
  }
  return sample;
}

PhantomConfig phantom_config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("phantom config: invalid JSON: ") + e.what());
  }
  PhantomConfig cfg;
  if (j.contains("shape")) {
    const auto s = j["shape"].get<std::vector<int>>();
    if (s.size() != 3) throw std::runtime_error("phantom config: shape must have 3 entries");
    cfg.shape = {s[0], s[1], s[2]};
  }
  cfg.root_radius = j.value("root_radius", cfg.root_radius);
  cfg.branching_depth = j.value("branching_depth", cfg.branching_depth);
  cfg.radius_decay = j.value("radius_decay", cfg.radius_decay);
  cfg.tortuosity = j.value("tortuosity", cfg.tortuosity);
  cfg.noise_std = j.value("noise_std", cfg.noise_std);
  cfg.vessel_intensity = j.value("vessel_intensity", cfg.vessel_intensity);
  cfg.background_intensity = j.value("background_intensity", cfg.background_intensity);
  cfg.rng_seed = j.value("rng_seed", cfg.rng_seed);
  return cfg;
}

PhantomConfig phantom_config_from_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return phantom_config_from_json_text(text);
}

std::string phantom_config_to_json(const PhantomConfig& cfg) {
  json j;
  j["shape"] = {cfg.shape[0], cfg.shape[1], cfg.shape[2]};
  j["root_radius"] = cfg.root_radius;
  j["branching_depth"] = cfg.branching_depth;
  j["radius_decay"] = cfg.radius_decay;
  j["tortuosity"] = cfg.tortuosity;
  j["noise_std"] = cfg.noise_std;
  j["vessel_intensity"] = cfg.vessel_intensity;
  j["background_intensity"] = cfg.background_intensity;
  j["rng_seed"] = cfg.rng_seed;
  return j.dump(2);
}

void write_phantom(const PhantomSample& sample, const PhantomConfig& cfg,
                   const std::string& out_dir, const std::string& stem) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string base = (fs::path(out_dir) / stem).string();
  write_volume(sample.image, base + "_image.nii.gz");
  write_volume(sample.label, base + "_label.nii.gz");

  json centerlines = json::array();
  json depths = json::array();
  json radii = json::array();
  for (const auto& b : sample.branches) {
    json pts = json::array();
    for (const auto& p : b.centerline) pts.push_back({p[0], p[1], p[2]});
    centerlines.push_back(std::move(pts));
    depths.push_back(b.depth);
    radii.push_back(b.radius);
  }
  {
    std::ofstream f(base + "_centerline.json");
    if (!f) throw std::runtime_error("cannot write file: " + base + "_centerline.json");
    f << centerlines.dump() << "\n";
  }
  {
    json meta;
    meta["config"] = json::parse(phantom_config_to_json(cfg));
    meta["branch_depths"] = depths;
    meta["branch_radii"] = radii;
    std::ofstream f(base + "_meta.json");
    if (!f) throw std::runtime_error("cannot write file: " + base + "_meta.json");
    f << meta.dump(2) << "\n";
  }
}

}  // namespace vb
