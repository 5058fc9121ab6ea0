#include "vesselbench/metrics.hpp"

#include <stdexcept>

#include "json.hpp"

#include "vesselbench/connectivity.hpp"

namespace vb {

double dice(const ConfusionCounts& c) {
  const std::uint64_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;  // both masks empty: vacuous agreement
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

namespace {

// Face directions for the 6 thinning subiterations: U, D, N, S, E, W.
constexpr int DIRS[6][3] = {{0, 0, -1}, {0, 0, 1}, {0, -1, 0}, {0, 1, 0}, {-1, 0, 0}, {1, 0, 0}};

inline bool is_endpoint(std::uint32_t mask) { return fg_neighbor_count_26(mask) <= 1; }

}  // namespace

Skeleton skeletonize(const LabelVolume& mask) {
  const auto& shape = mask.shape;
  const int nx = shape[0], ny = shape[1], nz = shape[2];

  Skeleton skel;
  skel.source_shape = shape;
  skel.data = mask.data;
  for (auto& v : skel.data) v = v ? 1 : 0;
  std::uint8_t* d = skel.data.data();

  std::vector<std::size_t> candidates;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& dir : DIRS) {
      // Border voxels in this direction, gathered in raster order.
      candidates.clear();
      for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
          for (int x = 0; x < nx; ++x) {
            const std::size_t i = mask.index(x, y, z);
            if (!d[i]) continue;
            const int bx = x + dir[0], by = y + dir[1], bz = z + dir[2];
            const bool border = !mask.in_bounds(bx, by, bz) || !d[mask.index(bx, by, bz)];
            if (border) candidates.push_back(i);
          }
      // Sequential re-checked deletion keeps every intermediate state
      // topologically equivalent to the input.
      for (const std::size_t i : candidates) {
        const int x = static_cast<int>(i % nx);
        const int y = static_cast<int>((i / nx) % ny);
        const int z = static_cast<int>(i / (static_cast<std::size_t>(nx) * ny));
        const std::uint32_t m = neighborhood_mask(d, shape, x, y, z);
        if (is_endpoint(m)) continue;
        if (!is_simple_point(m)) continue;
        d[i] = 0;
        changed = true;
      }
    }
  }
  return skel;
}

ClDiceReport cl_dice(const LabelVolume& pred, const LabelVolume& gt) {
  if (pred.shape != gt.shape) throw std::runtime_error("cl_dice: shape mismatch");
  std::size_t gt_fg = 0;
  for (auto v : gt.data) gt_fg += (v != 0);
  if (gt_fg == 0) throw std::runtime_error("cl_dice: ground truth is empty");

  ClDiceReport r;
  r.dice = dice(confusion_counts(pred, gt));

  const Skeleton skel_gt = skeletonize(gt);
  std::size_t gt_skel = 0, gt_skel_in_pred = 0;
  for (std::size_t i = 0; i < skel_gt.data.size(); ++i) {
    if (!skel_gt.data[i]) continue;
    ++gt_skel;
    gt_skel_in_pred += (pred.data[i] != 0);
  }
  r.tsens = gt_skel > 0 ? static_cast<double>(gt_skel_in_pred) / static_cast<double>(gt_skel) : 0.0;

  std::size_t pred_fg = 0;
  for (auto v : pred.data) pred_fg += (v != 0);
  if (pred_fg == 0) {
    r.tprec = 0.0;
    r.cldice = 0.0;
    return r;
  }
  const Skeleton skel_pred = skeletonize(pred);
  std::size_t p_skel = 0, p_skel_in_gt = 0;
  for (std::size_t i = 0; i < skel_pred.data.size(); ++i) {
    if (!skel_pred.data[i]) continue;
    ++p_skel;
    p_skel_in_gt += (gt.data[i] != 0);
  }
  r.tprec = p_skel > 0 ? static_cast<double>(p_skel_in_gt) / static_cast<double>(p_skel) : 0.0;

  const double sum = r.tprec + r.tsens;
  r.cldice = sum > 0 ? 2.0 * r.tprec * r.tsens / sum : 0.0;
  return r;
}

std::string ClDiceReport::to_json() const {
  nlohmann::json j;
  j["tprec"] = tprec;
  j["tsens"] = tsens;
  j["cldice"] = cldice;
  j["dice"] = dice;
  return j.dump(2);
}

}  // namespace vb
