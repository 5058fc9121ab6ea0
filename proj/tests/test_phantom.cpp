#include <cmath>
#include <stdexcept>

#include "doctest.h"

#include "vesselbench/connectivity.hpp"
#include "vesselbench/edt.hpp"
#include "vesselbench/phantom.hpp"

using namespace vb;

namespace {

// Independent rasterization oracle: a voxel is foreground iff it lies within
// some branch's radius of that branch's emitted centerline.
LabelVolume rasterize_oracle(const PhantomSample& s) {
  LabelVolume out(s.label.shape, s.label.spacing);
  const auto& sh = out.shape;
  for (int z = 0; z < sh[2]; ++z)
    for (int y = 0; y < sh[1]; ++y)
      for (int x = 0; x < sh[0]; ++x) {
        bool fg = false;
        for (const PhantomBranch& b : s.branches) {
          const double r2 = b.radius * b.radius;
          for (const auto& c : b.centerline) {
            const double dx = x - c[0], dy = y - c[1], dz = z - c[2];
            if (dx * dx + dy * dy + dz * dz <= r2) {
              fg = true;
              break;
            }
          }
          if (fg) break;
        }
        out.at(x, y, z) = fg ? 1 : 0;
      }
  return out;
}

}  // namespace

TEST_CASE("same config and seed give a bit-identical sample") {
  PhantomConfig cfg;
  cfg.shape = {32, 32, 32};
  cfg.root_radius = 2.5;
  cfg.branching_depth = 2;
  cfg.tortuosity = 1.0;
  cfg.noise_std = 0.2;
  cfg.rng_seed = 77;
  const PhantomSample a = generate_phantom(cfg);
  const PhantomSample b = generate_phantom(cfg);
  CHECK(a.image.data == b.image.data);
  CHECK(a.label.data == b.label.data);
  REQUIRE(a.branches.size() == b.branches.size());
  for (std::size_t i = 0; i < a.branches.size(); ++i)
    CHECK(a.branches[i].centerline == b.branches[i].centerline);
}

TEST_CASE("depth 0, straight, noise-free: every axial slice is a digital disk") {
  PhantomConfig cfg;
  cfg.shape = {21, 21, 16};
  cfg.root_radius = 3.0;
  cfg.branching_depth = 0;
  cfg.tortuosity = 0.0;
  cfg.noise_std = 0.0;
  const PhantomSample s = generate_phantom(cfg);
  REQUIRE(s.branches.size() == 1);
  // The tube spans the whole axis.
  CHECK(s.branches[0].centerline.front()[2] == 0);
  CHECK(s.branches[0].centerline.back()[2] == 15);
  const int cx = s.branches[0].centerline[0][0];
  const int cy = s.branches[0].centerline[0][1];
  for (int z = 0; z < 16; ++z)
    for (int y = 0; y < 21; ++y)
      for (int x = 0; x < 21; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        CHECK(static_cast<int>(s.label.at(x, y, z)) == (d2 <= 9.0 ? 1 : 0));
      }
}

TEST_CASE("branch count is 2^(depth+1) - 1") {
  for (int depth = 0; depth <= 3; ++depth) {
    PhantomConfig cfg;
    cfg.shape = {48, 48, 48};
    cfg.root_radius = 3.0;
    cfg.radius_decay = 0.8;
    cfg.branching_depth = depth;
    cfg.rng_seed = depth;
    const PhantomSample s = generate_phantom(cfg);
    CHECK(static_cast<int>(s.branches.size()) == (1 << (depth + 1)) - 1);
  }
}

TEST_CASE("depth clamps so the deepest radius stays >= 0.5 voxel") {
  PhantomConfig cfg;
  cfg.shape = {48, 48, 48};
  cfg.root_radius = 1.0;
  cfg.radius_decay = 0.5;
  cfg.branching_depth = 6;  // 1.0 * 0.5^6 would be far below 0.5
  CHECK(effective_depth(cfg) == 1);
  const PhantomSample s = generate_phantom(cfg);
  CHECK(static_cast<int>(s.branches.size()) == 3);
  for (const auto& b : s.branches) CHECK(b.radius >= 0.5);
}

TEST_CASE("label foreground is a single 26-connected component") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    PhantomConfig cfg;
    cfg.shape = {40, 40, 40};
    cfg.root_radius = 2.0;
    cfg.branching_depth = 3;
    cfg.radius_decay = 0.75;
    cfg.tortuosity = 1.0;
    cfg.rng_seed = seed;
    const PhantomSample s = generate_phantom(cfg);
    CHECK(count_components(s.label.data.data(), s.label.shape, 26) == 1);
  }
}

TEST_CASE("noise-free image thresholded at the intensity midpoint recovers the label") {
  PhantomConfig cfg;
  cfg.shape = {32, 32, 32};
  cfg.root_radius = 2.0;
  cfg.branching_depth = 2;
  cfg.vessel_intensity = 3.0;
  cfg.background_intensity = 1.0;
  cfg.noise_std = 0.0;
  cfg.rng_seed = 5;
  const PhantomSample s = generate_phantom(cfg);
  const float mid = 2.0f;
  for (std::size_t i = 0; i < s.image.size(); ++i)
    CHECK(static_cast<int>(s.label.data[i]) == (s.image.data[i] > mid ? 1 : 0));
}

TEST_CASE("child radii never exceed the parent radius") {
  PhantomConfig cfg;
  cfg.shape = {48, 48, 48};
  cfg.root_radius = 3.5;
  cfg.branching_depth = 3;
  cfg.radius_decay = 0.7;
  cfg.rng_seed = 12;
  const PhantomSample s = generate_phantom(cfg);
  for (const auto& b : s.branches)
    CHECK(b.radius == doctest::Approx(cfg.root_radius * std::pow(cfg.radius_decay, b.depth)));
}

TEST_CASE("label equals the distance-to-centerline oracle exactly") {
  PhantomConfig cfg;
  cfg.shape = {36, 36, 36};
  cfg.root_radius = 4.0;
  cfg.branching_depth = 3;
  cfg.radius_decay = 0.7;
  cfg.tortuosity = 0.8;
  cfg.rng_seed = 9;
  const PhantomSample s = generate_phantom(cfg);
  // Deepest branches end up at 4 * 0.7^3 ~ 1.37 voxels.
  for (const auto& b : s.branches)
    if (b.depth == 3) CHECK(b.radius == doctest::Approx(1.372));
  const LabelVolume oracle = rasterize_oracle(s);
  CHECK(s.label.data == oracle.data);
}

TEST_CASE("emitted centerline voxels all lie in the label foreground") {
  PhantomConfig cfg;
  cfg.shape = {40, 40, 40};
  cfg.root_radius = 2.5;
  cfg.branching_depth = 2;
  cfg.tortuosity = 1.5;
  cfg.rng_seed = 21;
  const PhantomSample s = generate_phantom(cfg);
  for (const auto& b : s.branches)
    for (const auto& c : b.centerline) CHECK(s.label.at(c[0], c[1], c[2]) == 1);
}

TEST_CASE("invalid configs are rejected") {
  PhantomConfig cfg;
  cfg.shape = {48, 48, 48};
  cfg.root_radius = 0.4;
  CHECK_THROWS_AS(generate_phantom(cfg), std::runtime_error);
  cfg.root_radius = 10.0;
  cfg.shape = {12, 12, 12};  // too small for a radius-10 root
  CHECK_THROWS_AS(generate_phantom(cfg), std::runtime_error);
  cfg = PhantomConfig{};
  cfg.radius_decay = 0.0;
  CHECK_THROWS_AS(generate_phantom(cfg), std::runtime_error);
}

TEST_CASE("config JSON round-trips") {
  PhantomConfig cfg;
  cfg.shape = {20, 30, 40};
  cfg.root_radius = 2.25;
  cfg.branching_depth = 4;
  cfg.noise_std = 0.15;
  cfg.rng_seed = 99;
  const PhantomConfig back = phantom_config_from_json_text(phantom_config_to_json(cfg));
  CHECK(back.shape == cfg.shape);
  CHECK(back.root_radius == cfg.root_radius);
  CHECK(back.branching_depth == cfg.branching_depth);
  CHECK(back.noise_std == cfg.noise_std);
  CHECK(back.rng_seed == cfg.rng_seed);
}
