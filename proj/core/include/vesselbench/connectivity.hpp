#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace vb {

// 3x3x3 neighborhood bitmask: bit (dz+1)*9 + (dy+1)*3 + (dx+1); the center
// voxel is bit 13. Out-of-bounds cells read as background.
std::uint32_t neighborhood_mask(const std::uint8_t* data, const std::array<int, 3>& shape,
                                int x, int y, int z);

/// Number of foreground voxels among the 26 neighbors encoded in `mask`.
int fg_neighbor_count_26(std::uint32_t mask);

/// Number of 26-connected components of the foreground within the 26
/// neighbors of the center (center bit ignored).
int fg_components_26(std::uint32_t mask);

/// Number of 6-connected components of the background within the 18
/// face/edge neighbors that touch a face neighbor of the center.
int bg_components_6_in_18(std::uint32_t mask);

/// Simple-point test for the (26, 6) connectivity pair: deleting the center
/// preserves local topology iff both counts are 1.
inline bool is_simple_point(std::uint32_t mask) {
  return fg_components_26(mask) == 1 && bg_components_6_in_18(mask) == 1;
}

/// Connected-component labeling of nonzero voxels. `connectivity` is 6 or 26.
/// Labels start at 1; background stays 0. Returns the component count.
int label_components(const std::uint8_t* data, const std::array<int, 3>& shape,
                     int connectivity, std::vector<std::int32_t>& labels_out);

int count_components(const std::uint8_t* data, const std::array<int, 3>& shape,
                     int connectivity);

}  // namespace vb
