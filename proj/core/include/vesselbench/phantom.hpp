#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vesselbench/volume.hpp"

namespace vb {

struct PhantomConfig {
  std::array<int, 3> shape{64, 64, 64};
  double root_radius = 3.0;       // voxels
  int branching_depth = 2;        // generations below the root
  double radius_decay = 0.7;      // child radius = parent radius * decay
  double tortuosity = 0.0;        // amplitude of the sinusoidal centerline bend
  double noise_std = 0.0;         // additive Gaussian intensity noise
  double vessel_intensity = 1.0;
  double background_intensity = 0.0;
  std::uint64_t rng_seed = 0;
};

struct PhantomBranch {
  std::vector<std::array<int, 3>> centerline;  // ordered voxel coordinates
  int depth = 0;
  double radius = 0.0;
};

struct PhantomSample {
  Volume3D image;
  LabelVolume label;
  std::vector<PhantomBranch> branches;
};

/// Generates a binary bifurcating tree of tubes with a paired noise-free
/// label. Deterministic given cfg.rng_seed: the same config always yields a
/// bit-identical sample. A voxel is foreground iff it lies within some
/// branch's radius of that branch's (digitized) centerline.
PhantomSample generate_phantom(const PhantomConfig& cfg);

/// Effective branching depth after the radius clamp (deepest radius >= 0.5).
int effective_depth(const PhantomConfig& cfg);

PhantomConfig phantom_config_from_json_file(const std::string& path);
PhantomConfig phantom_config_from_json_text(const std::string& text);
std::string phantom_config_to_json(const PhantomConfig& cfg);

/// Writes `<stem>_image.nii.gz`, `<stem>_label.nii.gz` and
/// `<stem>_centerline.json` (a JSON array of branches, each an array of
/// [x,y,z] triples) plus `<stem>_meta.json` with depths/radii and the config.
void write_phantom(const PhantomSample& sample, const PhantomConfig& cfg,
                   const std::string& out_dir, const std::string& stem);

}  // namespace vb
