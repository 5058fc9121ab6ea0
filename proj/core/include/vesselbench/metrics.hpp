#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vesselbench/volume.hpp"

namespace vb {

struct Skeleton {
  std::array<int, 3> source_shape{0, 0, 0};
  std::vector<std::uint8_t> data;  // centerline voxels, same grid as the source

  std::size_t voxel_count() const {
    std::size_t n = 0;
    for (auto v : data) n += (v != 0);
    return n;
  }
};

struct ClDiceReport {
  double tprec = 0.0;   // fraction of the prediction's skeleton inside gt
  double tsens = 0.0;   // fraction of gt's skeleton inside the prediction
  double cldice = 0.0;  // harmonic mean of the two
  double dice = 0.0;

  std::string to_json() const;
};

/// Dice score 2tp / (2tp + fp + fn). Both masks empty counts as perfect
/// agreement (1.0) so metric sweeps over degenerate checkpoints never crash.
double dice(const ConfusionCounts& c);

/// Topology-preserving medial-axis thinning: iteratively deletes simple
/// border points (6-subiteration directional sweep, raster order within each
/// sweep) while protecting curve endpoints. The result is a subset of the
/// input, thin, and has the same number of 26-connected components.
Skeleton skeletonize(const LabelVolume& mask);

/// Centerline Dice of a prediction against a non-empty ground truth.
/// Skeletons intersect the raw masks, not each other. Empty prediction gives
/// tprec = cldice = 0.
ClDiceReport cl_dice(const LabelVolume& pred, const LabelVolume& gt);

}  // namespace vb
