#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace vb {

/// Exact squared Euclidean distance (in voxel units) from every voxel to the
/// nearest nonzero site voxel, via the separable lower-envelope transform.
/// Voxels outside the grid do not exist; if there are no sites at all, every
/// entry is +infinity.
std::vector<double> squared_edt(const std::array<int, 3>& shape, const std::uint8_t* sites);

/// Squared distance of each voxel to the nearest background (zero) voxel of
/// `mask`. Foreground voxels adjacent to background get 1.
std::vector<double> squared_edt_to_background(const std::array<int, 3>& shape,
                                              const std::uint8_t* mask);

}  // namespace vb
