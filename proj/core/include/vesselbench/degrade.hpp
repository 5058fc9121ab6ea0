#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "vesselbench/volume.hpp"

namespace vb {

enum class DegradationKind { none, erosion, dilation, removed };

struct DegradationSpec {
  DegradationKind kind = DegradationKind::none;
  int level = 0;              // 1..3, removed only
  std::uint64_t rng_seed = 0;  // removed only, breaks ties among equal-depth branches

  std::string name() const;
};

DegradationSpec degradation_from_name(const std::string& kind, int level, std::uint64_t seed);

/// Erosion by the radius-1 digital ball (6-neighborhood cross) that never
/// changes the number of 26-connected components: voxels the plain erosion
/// would delete are visited in raster order and kept whenever their removal
/// would split or destroy a component.
LabelVolume erode_safe(const LabelVolume& label);

/// Morphological dilation by the radius-1 digital ball (6-neighborhood).
LabelVolume dilate(const LabelVolume& label);

/// Removes the distal fraction of skeleton branches (0.15 / 0.35 / 0.55 of
/// the branch count for levels 1..3) together with the label voxels nearer
/// to a deleted centerline than to a kept one. Branches are ranked by graph
/// distance from the root (the largest-radius skeleton endpoint); the root
/// branch is never deleted. Outputs are nested across levels for a fixed seed.
LabelVolume prune_distal(const LabelVolume& label, int level, std::uint64_t rng_seed);
LabelVolume prune_distal(const LabelVolume& label, int level, std::uint64_t rng_seed,
                         const std::array<double, 3>& fractions);

LabelVolume apply_degradation(const LabelVolume& label, const DegradationSpec& spec);

}  // namespace vb
