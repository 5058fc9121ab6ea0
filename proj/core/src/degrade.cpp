#include "vesselbench/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "vesselbench/connectivity.hpp"
#include "vesselbench/edt.hpp"
#include "vesselbench/metrics.hpp"
#include "vesselbench/rng.hpp"

namespace vb {

std::string DegradationSpec::name() const {
  switch (kind) {
    case DegradationKind::none: return "reference";
    case DegradationKind::erosion: return "erosion";
    case DegradationKind::dilation: return "dilation";
    case DegradationKind::removed: return "removed" + std::to_string(level);
  }
  return "unknown";
}

DegradationSpec degradation_from_name(const std::string& kind, int level, std::uint64_t seed) {
  DegradationSpec spec;
  spec.rng_seed = seed;
  if (kind == "reference" || kind == "none") {
    spec.kind = DegradationKind::none;
  } else if (kind == "erosion") {
    spec.kind = DegradationKind::erosion;
  } else if (kind == "dilation") {
    spec.kind = DegradationKind::dilation;
  } else if (kind == "removed") {
    spec.kind = DegradationKind::removed;
    if (level < 1 || level > 3) throw std::runtime_error("degrade: removed level must be 1..3");
    spec.level = level;
  } else {
    throw std::runtime_error("degrade: unknown kind '" + kind + "'");
  }
  return spec;
}

namespace {

struct GridIdx {
  int nx, ny, nz;
  std::size_t n;
  explicit GridIdx(const std::array<int, 3>& s)
      : nx(s[0]), ny(s[1]), nz(s[2]), n(static_cast<std::size_t>(s[0]) * s[1] * s[2]) {}
  void coords(std::size_t i, int& x, int& y, int& z) const {
    x = static_cast<int>(i % nx);
    y = static_cast<int>((i / nx) % ny);
    z = static_cast<int>(i / (static_cast<std::size_t>(nx) * ny));
  }
};

// In the current mask, can every foreground 26-neighbor of voxel i still
// reach each other without going through i? Only called when the local
// neighborhood splits into >= 2 pieces, i.e. when a loop elsewhere is the
// only thing that could keep them connected.
bool neighbors_connected_without(std::uint8_t* d, const std::array<int, 3>& shape,
                                 std::size_t i, std::vector<std::int32_t>& visit_stamp,
                                 std::int32_t stamp) {
  const GridIdx g(shape);
  int x, y, z;
  g.coords(i, x, y, z);

  std::vector<std::size_t> seeds;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0 && dz == 0) continue;
        const int xx = x + dx, yy = y + dy, zz = z + dz;
        if (xx < 0 || yy < 0 || zz < 0 || xx >= g.nx || yy >= g.ny || zz >= g.nz) continue;
        const std::size_t j = static_cast<std::size_t>(xx) +
                              static_cast<std::size_t>(g.nx) * (yy + static_cast<std::size_t>(g.ny) * zz);
        if (d[j]) seeds.push_back(j);
      }
  if (seeds.size() <= 1) return true;

  d[i] = 0;
  std::size_t found = 1;
  std::vector<std::size_t> stack{seeds[0]};
  visit_stamp[seeds[0]] = stamp;
  while (!stack.empty() && found < seeds.size()) {
    const std::size_t cur = stack.back();
    stack.pop_back();
    int cx, cy, cz;
    g.coords(cur, cx, cy, cz);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const int xx = cx + dx, yy = cy + dy, zz = cz + dz;
          if (xx < 0 || yy < 0 || zz < 0 || xx >= g.nx || yy >= g.ny || zz >= g.nz) continue;
          const std::size_t j = static_cast<std::size_t>(xx) +
                                static_cast<std::size_t>(g.nx) * (yy + static_cast<std::size_t>(g.ny) * zz);
          if (!d[j] || visit_stamp[j] == stamp) continue;
          visit_stamp[j] = stamp;
          stack.push_back(j);
          for (const std::size_t s : seeds)
            if (s == j) {
              ++found;
              break;
            }
        }
  }
  d[i] = 1;
  return found == seeds.size();
}

}  // namespace

LabelVolume erode_safe(const LabelVolume& label) {
  const GridIdx g(label.shape);
  const std::uint8_t* in = label.data.data();

  // Plain erosion by the 6-neighborhood cross; the volume border erodes.
  std::vector<std::uint8_t> eroded(g.n, 0);
  for (std::size_t i = 0; i < g.n; ++i) {
    if (!in[i]) continue;
    int x, y, z;
    g.coords(i, x, y, z);
    bool keep = x > 0 && x < g.nx - 1 && y > 0 && y < g.ny - 1 && z > 0 && z < g.nz - 1;
    keep = keep && in[i - 1] && in[i + 1];
    keep = keep && in[i - g.nx] && in[i + g.nx];
    keep = keep && in[i - static_cast<std::size_t>(g.nx) * g.ny] && in[i + static_cast<std::size_t>(g.nx) * g.ny];
    eroded[i] = keep ? 1 : 0;
  }

  LabelVolume out = label;
  std::uint8_t* d = out.data.data();
  std::vector<std::int32_t> visit_stamp(g.n, -1);
  std::int32_t stamp = 0;

  // Raster-order constrained deletion: a voxel the erosion wants gone is only
  // deleted if the 26-component count survives.
  for (std::size_t i = 0; i < g.n; ++i) {
    if (!d[i] || eroded[i]) continue;
    int x, y, z;
    g.coords(i, x, y, z);
    const std::uint32_t m = neighborhood_mask(d, label.shape, x, y, z);
    const int nfg = fg_neighbor_count_26(m);
    if (nfg == 0) continue;  // isolated voxel: deleting it drops a component
    if (fg_components_26(m) == 1) {
      d[i] = 0;
      continue;
    }
    if (neighbors_connected_without(d, label.shape, i, visit_stamp, ++stamp)) d[i] = 0;
  }
  return out;
}

LabelVolume dilate(const LabelVolume& label) {
  const GridIdx g(label.shape);
  LabelVolume out = label;
  const std::uint8_t* in = label.data.data();
  std::uint8_t* d = out.data.data();
  for (std::size_t i = 0; i < g.n; ++i) {
    if (!in[i]) continue;
    int x, y, z;
    g.coords(i, x, y, z);
    if (x > 0) d[i - 1] = 1;
    if (x < g.nx - 1) d[i + 1] = 1;
    if (y > 0) d[i - g.nx] = 1;
    if (y < g.ny - 1) d[i + g.nx] = 1;
    if (z > 0) d[i - static_cast<std::size_t>(g.nx) * g.ny] = 1;
    if (z < g.nz - 1) d[i + static_cast<std::size_t>(g.nx) * g.ny] = 1;
  }
  return out;
}

LabelVolume prune_distal(const LabelVolume& label, int level, std::uint64_t rng_seed) {
  return prune_distal(label, level, rng_seed, {0.15, 0.35, 0.55});
}

LabelVolume prune_distal(const LabelVolume& label, int level, std::uint64_t rng_seed,
                         const std::array<double, 3>& fractions) {
  if (level < 1 || level > 3) throw std::runtime_error("prune_distal: level must be 1..3");
  const GridIdx g(label.shape);

  const Skeleton skel = skeletonize(label);
  if (skel.voxel_count() == 0)
    throw std::runtime_error("prune_distal: label has no skeleton branches");
  const std::uint8_t* s = skel.data.data();

  // Degree of every skeleton voxel; junctions have degree >= 3.
  std::vector<std::uint8_t> junction(g.n, 0), branch_voxel(g.n, 0);
  for (std::size_t i = 0; i < g.n; ++i) {
    if (!s[i]) continue;
    int x, y, z;
    g.coords(i, x, y, z);
    const int deg = fg_neighbor_count_26(neighborhood_mask(s, label.shape, x, y, z));
    if (deg >= 3)
      junction[i] = 1;
    else
      branch_voxel[i] = 1;
  }

  std::vector<std::int32_t> branch_id, cluster_id;
  const int n_branches = label_components(branch_voxel.data(), label.shape, 26, branch_id);
  const int n_clusters = label_components(junction.data(), label.shape, 26, cluster_id);
  if (n_branches == 0)
    throw std::runtime_error("prune_distal: label has no skeleton branches");

  // Branch <-> junction-cluster incidence.
  std::vector<std::vector<int>> branch_clusters(n_branches + 1), cluster_branches(n_clusters + 1);
  auto link = [&](int b, int c) {
    auto& bc = branch_clusters[b];
    if (std::find(bc.begin(), bc.end(), c) == bc.end()) {
      bc.push_back(c);
      cluster_branches[c].push_back(b);
    }
  };
  for (std::size_t i = 0; i < g.n; ++i) {
    if (!branch_voxel[i]) continue;
    int x, y, z;
    g.coords(i, x, y, z);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const int xx = x + dx, yy = y + dy, zz = z + dz;
          if (xx < 0 || yy < 0 || zz < 0 || xx >= g.nx || yy >= g.ny || zz >= g.nz) continue;
          const std::size_t j = static_cast<std::size_t>(xx) +
                                static_cast<std::size_t>(g.nx) * (yy + static_cast<std::size_t>(g.ny) * zz);
          if (junction[j]) link(branch_id[i], cluster_id[j]);
        }
  }

  // Root = skeleton endpoint with the largest inscribed radius.
  const std::vector<double> radius2 = squared_edt_to_background(label.shape, label.data.data());
  std::size_t root_idx = g.n;
  double best = -1.0;
  for (std::size_t i = 0; i < g.n; ++i) {
    if (!s[i]) continue;
    int x, y, z;
    g.coords(i, x, y, z);
    const int deg = fg_neighbor_count_26(neighborhood_mask(s, label.shape, x, y, z));
    if (deg > 1) continue;
    if (radius2[i] > best) {
      best = radius2[i];
      root_idx = i;
    }
  }
  if (root_idx == g.n) {
    // No endpoint (pure loop): fall back to the fattest skeleton voxel.
    for (std::size_t i = 0; i < g.n; ++i)
      if (s[i] && radius2[i] > best) {
        best = radius2[i];
        root_idx = i;
      }
  }
  const int root_branch = branch_voxel[root_idx] ? branch_id[root_idx] : [&] {
    // Root landed on a junction cluster; pick its raster-first incident branch.
    const auto& bs = cluster_branches[cluster_id[root_idx]];
    return bs.empty() ? 1 : *std::min_element(bs.begin(), bs.end());
  }();

  // Branch-graph BFS distance from the root branch.
  constexpr int UNREACHED = std::numeric_limits<int>::max();
  std::vector<int> dist(n_branches + 1, UNREACHED);
  std::vector<int> queue{root_branch};
  dist[root_branch] = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const int b = queue[head];
    for (const int c : branch_clusters[b])
      for (const int nb : cluster_branches[c])
        if (dist[nb] == UNREACHED) {
          dist[nb] = dist[b] + 1;
          queue.push_back(nb);
        }
  }

  // Most distal first; seed-dependent tie-break among equal-distance branches.
  std::vector<int> order;
  for (int b = 1; b <= n_branches; ++b)
    if (b != root_branch) order.push_back(b);
  std::vector<std::uint64_t> tie(n_branches + 1);
  for (int b = 1; b <= n_branches; ++b) tie[b] = derive_seed(rng_seed, "prune-tie", b);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (dist[a] != dist[b]) return dist[a] > dist[b];
    if (tie[a] != tie[b]) return tie[a] < tie[b];
    return a < b;
  });

  const double fraction = fractions[level - 1];
  const int k = std::min<int>(static_cast<int>(std::floor(fraction * n_branches)),
                              n_branches - 1);
  std::vector<std::uint8_t> deleted_branch(n_branches + 1, 0);
  for (int i = 0; i < k; ++i) deleted_branch[order[i]] = 1;

  if (k == 0) return label;

  // A label voxel goes away iff it is strictly nearer to a deleted centerline
  // voxel than to any kept skeleton voxel.
  std::vector<std::uint8_t> del_sites(g.n, 0), keep_sites(g.n, 0);
  for (std::size_t i = 0; i < g.n; ++i) {
    if (!s[i]) continue;
    if (branch_voxel[i] && deleted_branch[branch_id[i]])
      del_sites[i] = 1;
    else
      keep_sites[i] = 1;
  }
  const std::vector<double> d_del = squared_edt(label.shape, del_sites.data());
  const std::vector<double> d_keep = squared_edt(label.shape, keep_sites.data());

  LabelVolume out = label;
  for (std::size_t i = 0; i < g.n; ++i)
    if (out.data[i] && d_del[i] < d_keep[i]) out.data[i] = 0;
  return out;
}

LabelVolume apply_degradation(const LabelVolume& label, const DegradationSpec& spec) {
  switch (spec.kind) {
    case DegradationKind::none: return label;
    case DegradationKind::erosion: return erode_safe(label);
    case DegradationKind::dilation: return dilate(label);
    case DegradationKind::removed: return prune_distal(label, spec.level, spec.rng_seed);
  }
  throw std::runtime_error("degrade: invalid kind");
}

}  // namespace vb
