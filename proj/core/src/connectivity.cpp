#include "vesselbench/connectivity.hpp"

#include <cstdlib>

namespace vb {
namespace {

constexpr int CENTER = 13;

inline int cell_dx(int i) { return i % 3 - 1; }
inline int cell_dy(int i) { return (i / 3) % 3 - 1; }
inline int cell_dz(int i) { return i / 9 - 1; }

// Static adjacency tables between the 27 neighborhood cells.
struct CellTables {
  // adj26[i]: bitmask of cells within Chebyshev distance 1 of cell i.
  std::uint32_t adj26[27]{};
  // adj6[i]: bitmask of cells at L1 distance exactly 1 of cell i.
  std::uint32_t adj6[27]{};
  std::uint32_t n18_mask = 0;   // cells with L1 offset <= 2, excluding center
  std::uint32_t face_mask = 0;  // the 6 face neighbors of the center

  CellTables() {
    for (int i = 0; i < 27; ++i) {
      const int xi = cell_dx(i), yi = cell_dy(i), zi = cell_dz(i);
      const int l1 = std::abs(xi) + std::abs(yi) + std::abs(zi);
      if (i != CENTER && l1 <= 2) n18_mask |= 1u << i;
      if (l1 == 1) face_mask |= 1u << i;
      for (int j = 0; j < 27; ++j) {
        if (i == j) continue;
        const int ax = std::abs(xi - cell_dx(j));
        const int ay = std::abs(yi - cell_dy(j));
        const int az = std::abs(zi - cell_dz(j));
        if (ax <= 1 && ay <= 1 && az <= 1) adj26[i] |= 1u << j;
        if (ax + ay + az == 1) adj6[i] |= 1u << j;
      }
    }
  }
};

const CellTables& tables() {
  static const CellTables t;
  return t;
}

// Counts connected components of `set` (bitmask over cells) under the given
// per-cell adjacency masks.
int component_count(std::uint32_t set, const std::uint32_t* adj) {
  int count = 0;
  std::uint32_t remaining = set;
  while (remaining) {
    ++count;
    std::uint32_t frontier = remaining & (~remaining + 1);  // lowest set bit
    std::uint32_t comp = 0;
    while (frontier) {
      comp |= frontier;
      std::uint32_t next = 0;
      std::uint32_t f = frontier;
      while (f) {
        const int i = __builtin_ctz(f);
        f &= f - 1;
        next |= adj[i] & set & ~comp;
      }
      frontier = next;
    }
    remaining &= ~comp;
  }
  return count;
}

}  // namespace

std::uint32_t neighborhood_mask(const std::uint8_t* data, const std::array<int, 3>& shape,
                                int x, int y, int z) {
  std::uint32_t mask = 0;
  const int nx = shape[0], ny = shape[1], nz = shape[2];
  for (int dz = -1; dz <= 1; ++dz) {
    const int zz = z + dz;
    if (zz < 0 || zz >= nz) continue;
    for (int dy = -1; dy <= 1; ++dy) {
      const int yy = y + dy;
      if (yy < 0 || yy >= ny) continue;
      const std::size_t row = static_cast<std::size_t>(nx) * (yy + static_cast<std::size_t>(ny) * zz);
      for (int dx = -1; dx <= 1; ++dx) {
        const int xx = x + dx;
        if (xx < 0 || xx >= nx) continue;
        if (data[row + xx])
          mask |= 1u << ((dz + 1) * 9 + (dy + 1) * 3 + (dx + 1));
      }
    }
  }
  return mask;
}

int fg_neighbor_count_26(std::uint32_t mask) {
  return __builtin_popcount(mask & ~(1u << CENTER));
}

int fg_components_26(std::uint32_t mask) {
  return component_count(mask & ~(1u << CENTER), tables().adj26);
}

int bg_components_6_in_18(std::uint32_t mask) {
  const CellTables& t = tables();
  const std::uint32_t bg18 = ~mask & t.n18_mask;
  // Count only components that contain a face neighbor of the center.
  int count = 0;
  std::uint32_t remaining = bg18;
  while (remaining) {
    std::uint32_t frontier = remaining & (~remaining + 1);
    std::uint32_t comp = 0;
    while (frontier) {
      comp |= frontier;
      std::uint32_t next = 0;
      std::uint32_t f = frontier;
      while (f) {
        const int i = __builtin_ctz(f);
        f &= f - 1;
        next |= t.adj6[i] & bg18 & ~comp;
      }
      frontier = next;
    }
    if (comp & t.face_mask) ++count;
    remaining &= ~comp;
  }
  return count;
}

int label_components(const std::uint8_t* data, const std::array<int, 3>& shape,
                     int connectivity, std::vector<std::int32_t>& labels_out) {
  const int nx = shape[0], ny = shape[1], nz = shape[2];
  const std::size_t n = static_cast<std::size_t>(nx) * ny * nz;
  labels_out.assign(n, 0);

  std::vector<std::size_t> stack;
  int next_label = 0;
  for (std::size_t start = 0; start < n; ++start) {
    if (!data[start] || labels_out[start]) continue;
    ++next_label;
    labels_out[start] = next_label;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t idx = stack.back();
      stack.pop_back();
      const int x = static_cast<int>(idx % nx);
      const int y = static_cast<int>((idx / nx) % ny);
      const int z = static_cast<int>(idx / (static_cast<std::size_t>(nx) * ny));
      for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0 && dz == 0) continue;
            if (connectivity == 6 && std::abs(dx) + std::abs(dy) + std::abs(dz) != 1) continue;
            const int xx = x + dx, yy = y + dy, zz = z + dz;
            if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz) continue;
            const std::size_t j = static_cast<std::size_t>(xx) +
                                  static_cast<std::size_t>(nx) * (yy + static_cast<std::size_t>(ny) * zz);
            if (data[j] && !labels_out[j]) {
              labels_out[j] = next_label;
              stack.push_back(j);
            }
          }
    }
  }
  return next_label;
}

int count_components(const std::uint8_t* data, const std::array<int, 3>& shape,
                     int connectivity) {
  std::vector<std::int32_t> labels;
  return label_components(data, shape, connectivity, labels);
}

}  // namespace vb
