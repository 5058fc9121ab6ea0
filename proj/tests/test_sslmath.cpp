#include <cmath>
#include <functional>
#include <stdexcept>

#include "doctest.h"

#include "vesselbench/phantom.hpp"
#include "vesselbench/rng.hpp"
#include "vesselbench/sslmath.hpp"

using namespace vb;

namespace {

constexpr double LN2 = 0.6931471805599453;

std::vector<double> random_probs(std::size_t n, Rng& rng, double lo = 0.05, double hi = 0.95) {
  std::vector<double> p(n);
  for (auto& v : p) v = rng.uniform(lo, hi);
  return p;
}

std::vector<std::uint8_t> random_mask(std::size_t n, Rng& rng, double p = 0.5) {
  std::vector<std::uint8_t> m(n);
  for (auto& v : m) v = rng.uniform() < p ? 1 : 0;
  return m;
}

// Central-difference gradient check: max relative error of the analytic
// gradient against (f(x+h) - f(x-h)) / 2h.
double max_grad_rel_error(std::vector<double>& x, const std::function<double()>& eval,
                          const std::vector<double>& analytic) {
  double worst = 0;
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = eval();
    x[i] = keep - h;
    const double down = eval();
    x[i] = keep;
    const double numeric = (up - down) / (2 * h);
    const double scale = std::max({1e-8, std::fabs(numeric), std::fabs(analytic[i])});
    worst = std::max(worst, std::fabs(numeric - analytic[i]) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("soft dice loss: perfect, uniform, and scalar-loop oracle") {
  // perfect hard prediction on an 8^3 mask
  Rng rng(1);
  std::vector<std::uint8_t> gt = random_mask(512, rng);
  std::vector<double> pred(512);
  for (std::size_t i = 0; i < 512; ++i) pred[i] = gt[i];
  CHECK(soft_dice_loss(pred, gt) <= 1e-4);
  CHECK(soft_dice_loss(pred, gt) >= 0.0);

  // uniform 0.5 on a 2-voxel domain, half foreground
  CHECK(soft_dice_loss({0.5, 0.5}, {1, 0}) ==
        doctest::Approx(1.0 - (2 * 0.5 + 1e-5) / (1.0 + 1.0 + 1e-5)).epsilon(1e-12));

  // random 4^3 against an independently accumulated oracle
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_probs(64, rng, 0.0, 1.0);
    const auto g = random_mask(64, rng);
    long double inter = 0, ps = 0, gs = 0;
    for (std::size_t i = 0; i < 64; ++i) {
      inter += static_cast<long double>(p[i]) * g[i];
      ps += p[i];
      gs += g[i];
    }
    const double oracle = static_cast<double>(1.0L - (2.0L * inter + 1e-5L) / (ps + gs + 1e-5L));
    CHECK(soft_dice_loss(p, g) == doctest::Approx(oracle).epsilon(1e-9));
    CHECK(soft_dice_loss(p, g) >= 0.0);
    CHECK(soft_dice_loss(p, g) <= 1.0);
  }
}

TEST_CASE("cross entropy: confident, uniform, and scalar-loop oracle") {
  Rng rng(2);
  {
    const auto g = random_mask(64, rng);
    std::vector<double> fg(64);
    for (std::size_t i = 0; i < 64; ++i) fg[i] = g[i] ? 1.0 - 1e-7 : 1e-7;
    const ProbVolume pv = ProbVolume::from_foreground({4, 4, 4}, fg);
    CHECK(cross_entropy_loss(pv, g) == doctest::Approx(-std::log(1.0 - 1e-7)).epsilon(1e-6));
  }
  {
    const ProbVolume pv = ProbVolume::from_foreground({2, 1, 1}, {0.5, 0.5});
    CHECK(cross_entropy_loss(pv, {1, 0}) == doctest::Approx(LN2).epsilon(1e-12));
  }
  for (int trial = 0; trial < 20; ++trial) {
    const auto fg = random_probs(64, rng);
    const auto g = random_mask(64, rng);
    const ProbVolume pv = ProbVolume::from_foreground({4, 4, 4}, fg);
    long double acc = 0;
    for (std::size_t i = 0; i < 64; ++i)
      acc -= std::log(static_cast<long double>(g[i] ? fg[i] : 1.0 - fg[i]));
    CHECK(cross_entropy_loss(pv, g) ==
          doctest::Approx(static_cast<double>(acc / 64)).epsilon(1e-9));
  }
}

TEST_CASE("gaussian ramp-up endpoints and monotonicity") {
  CHECK(gaussian_rampup({300, 300, 0.01}) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(gaussian_rampup({0, 300, 1.0}) == doctest::Approx(std::exp(-5.0)).epsilon(1e-12));
  for (int t = 0; t <= 100; t += 10) CHECK(gaussian_rampup({t, 100, 0.0}) == 0.0);

  double prev = -1;
  for (int t = 0; t <= 1000; ++t) {
    const double v = gaussian_rampup({t, 1000, 0.7});
    CHECK(v >= prev);
    prev = v;
  }
  CHECK_THROWS_AS(gaussian_rampup({0, 0, 1.0}), std::runtime_error);
}

TEST_CASE("uncertainty threshold endpoints and monotonicity") {
  CHECK(uncertainty_threshold({300, 300, 0}) == doctest::Approx(LN2).epsilon(1e-9));
  CHECK(uncertainty_threshold({0, 300, 0}) ==
        doctest::Approx(LN2 * (0.75 + 0.25 * std::exp(-5.0))).epsilon(1e-9));
  CHECK(uncertainty_threshold({0, 300, 0}) == doctest::Approx(0.521028).epsilon(1e-5));
  CHECK(uncertainty_threshold({150, 300, 0}) ==
        doctest::Approx(LN2 * (0.75 + 0.25 * std::exp(-1.25))).epsilon(1e-9));

  double prev = -1;
  for (int t = 0; t <= 1000; ++t) {
    const double v = uncertainty_threshold({t, 1000, 0});
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("uncertainty map: zero-entropy, maximal disagreement, entropy oracle") {
  Rng rng(3);
  {
    // identical hard passes
    std::vector<double> fg(27);
    for (auto& v : fg) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    const ProbVolume p = ProbVolume::from_foreground({3, 3, 3}, fg);
    const UncertaintyVolume u = uncertainty_map({p, p, p});
    for (const double v : u.data) CHECK(v == 0.0);
  }
  {
    const ProbVolume a = ProbVolume::from_foreground({1, 1, 1}, {1.0});
    const ProbVolume b = ProbVolume::from_foreground({1, 1, 1}, {0.0});
    const UncertaintyVolume u = uncertainty_map({a, b});
    CHECK(u.data[0] == doctest::Approx(LN2).epsilon(1e-12));
  }
  {
    std::vector<ProbVolume> passes;
    for (int n = 0; n < 8; ++n)
      passes.push_back(ProbVolume::from_foreground({3, 3, 3}, random_probs(27, rng)));
    const UncertaintyVolume u = uncertainty_map(passes);
    for (std::size_t i = 0; i < 27; ++i) {
      long double mean_fg = 0;
      for (const auto& p : passes) mean_fg += p.fg[i];
      mean_fg /= 8;
      const long double mean_bg = 1.0L - mean_fg;
      const double oracle = static_cast<double>(-(mean_fg * std::log(mean_fg) +
                                                  mean_bg * std::log(mean_bg)));
      CHECK(u.data[i] == doctest::Approx(oracle).epsilon(1e-9));
      CHECK(u.data[i] >= 0.0);
      CHECK(u.data[i] <= LN2 + 1e-12);
    }
  }
  CHECK_THROWS_AS(uncertainty_map({}), std::runtime_error);
}

TEST_CASE("masked consistency: empty mask, identical predictions, restricted oracle") {
  Rng rng(4);
  const auto t_fg = random_probs(8, rng);
  const auto s_fg = random_probs(8, rng);
  const ProbVolume t = ProbVolume::from_foreground({2, 2, 2}, t_fg);
  const ProbVolume s = ProbVolume::from_foreground({2, 2, 2}, s_fg);
  UncertaintyVolume u;
  u.shape = {2, 2, 2};
  u.data = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.65, 0.69};

  CHECK(masked_consistency_loss(t, s, u, 0.0) == 0.0);           // nothing certain
  CHECK(masked_consistency_loss(t, t, u, LN2 + 0.01) == 0.0);    // identical predictions

  // Half the voxels masked in: equals the squared-denominator Dice on the
  // kept half.
  const double tau = 0.45;
  long double inter = 0, t2 = 0, s2 = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    if (u.data[i] >= tau) continue;
    inter += t_fg[i] * s_fg[i];
    t2 += t_fg[i] * t_fg[i];
    s2 += s_fg[i] * s_fg[i];
  }
  const double oracle = static_cast<double>(1.0L - (2 * inter + 1e-5L) / (t2 + s2 + 1e-5L));
  CHECK(masked_consistency_loss(t, s, u, tau) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(masked_consistency_loss(t, s, u, tau) >= 0.0);
  CHECK(masked_consistency_loss(t, s, u, tau) <= 1.0);
}

TEST_CASE("sharpen: fixed point, identity, reference value, order preservation") {
  const ProbVolume half = ProbVolume::from_foreground({1, 1, 1}, {0.5});
  for (const double T : {0.05, 0.1, 1.0, 3.0})
    CHECK(sharpen(half, T).fg[0] == doctest::Approx(0.5).epsilon(1e-15));

  Rng rng(5);
  const auto fg = random_probs(50, rng, 0.0, 1.0);
  const ProbVolume p = ProbVolume::from_foreground({50, 1, 1}, fg);
  const ProbVolume ident = sharpen(p, 1.0);
  for (std::size_t i = 0; i < 50; ++i) CHECK(ident.fg[i] == doctest::Approx(fg[i]).epsilon(1e-12));

  const ProbVolume x = ProbVolume::from_foreground({1, 1, 1}, {0.6});
  const double expected = std::pow(0.6, 10.0) / (std::pow(0.6, 10.0) + std::pow(0.4, 10.0));
  CHECK(sharpen(x, 0.1).fg[0] == doctest::Approx(expected).epsilon(1e-9));
  CHECK(sharpen(x, 0.1).fg[0] == doctest::Approx(0.98295).epsilon(1e-4));

  // Order preservation and argmax preservation.
  const ProbVolume sp = sharpen(p, 0.1);
  sp.validate();
  for (std::size_t i = 0; i + 1 < 50; ++i)
    for (std::size_t j = i + 1; j < 50; ++j)
      if (fg[i] < fg[j])
        CHECK(sp.fg[i] <= sp.fg[j] + 1e-12);
  for (std::size_t i = 0; i < 50; ++i)
    if (fg[i] != 0.5) CHECK((fg[i] > 0.5) == (sp.fg[i] > 0.5));

  CHECK_THROWS_AS(sharpen(p, 0.0), std::runtime_error);
  CHECK_THROWS_AS(sharpen(p, -1.0), std::runtime_error);
}

TEST_CASE("sdm_from_mask: half-space sign flip and single-voxel anchor") {
  {
    LabelVolume l({4, 4, 4}, {1, 1, 1});
    for (int z = 0; z < 4; ++z)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 2; ++x) l.at(x, y, z) = 1;
    const SDMVolume sdm = sdm_from_mask(l);
    for (int z = 0; z < 4; ++z)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
          const double v = sdm.data[l.index(x, y, z)];
          if (x < 2) CHECK(v < 0.0);
          else CHECK(v > 0.0);
          CHECK(std::fabs(v) <= 1.0 + 1e-12);
        }
  }
  {
    LabelVolume l({5, 5, 5}, {1, 1, 1});
    l.at(2, 2, 2) = 1;
    const SDMVolume sdm = sdm_from_mask(l);
    CHECK(sdm.data[l.index(2, 2, 2)] == doctest::Approx(-1.0).epsilon(1e-12));
  }
  // empty and full labels are undefined
  LabelVolume empty({3, 3, 3}, {1, 1, 1});
  CHECK_THROWS_AS(sdm_from_mask(empty), std::runtime_error);
  LabelVolume full({3, 3, 3}, {1, 1, 1}, 1);
  CHECK_THROWS_AS(sdm_from_mask(full), std::runtime_error);
}

TEST_CASE("sdm_from_mask matches a brute-force distance oracle") {
  Rng rng(6);
  LabelVolume l({10, 9, 8}, {1, 1, 1});
  for (auto& v : l.data) v = rng.uniform() < 0.3 ? 1 : 0;
  l.at(5, 4, 4) = 1;  // keep non-empty
  const SDMVolume sdm = sdm_from_mask(l);

  const auto& sh = l.shape;
  auto brute_dist = [&](int x, int y, int z, bool to_fg) {
    double best = 1e30;
    for (int zz = 0; zz < sh[2]; ++zz)
      for (int yy = 0; yy < sh[1]; ++yy)
        for (int xx = 0; xx < sh[0]; ++xx) {
          if ((l.at(xx, yy, zz) != 0) != to_fg) continue;
          const double d2 = (x - xx) * (x - xx) + (y - yy) * (y - yy) + (z - zz) * (z - zz);
          best = std::min(best, d2);
        }
    return std::sqrt(best);
  };
  double max_in = 0, max_out = 0;
  for (int z = 0; z < sh[2]; ++z)
    for (int y = 0; y < sh[1]; ++y)
      for (int x = 0; x < sh[0]; ++x) {
        if (l.at(x, y, z)) max_in = std::max(max_in, brute_dist(x, y, z, false));
        else max_out = std::max(max_out, brute_dist(x, y, z, true));
      }
  for (int z = 0; z < sh[2]; ++z)
    for (int y = 0; y < sh[1]; ++y)
      for (int x = 0; x < sh[0]; ++x) {
        const double expect = l.at(x, y, z) ? -brute_dist(x, y, z, false) / max_in
                                            : brute_dist(x, y, z, true) / max_out;
        CHECK(sdm.data[l.index(x, y, z)] == doctest::Approx(expect).epsilon(1e-12));
      }
}

TEST_CASE("sdm_to_seg: center value, reference values, stability") {
  SDMVolume z;
  z.shape = {3, 1, 1};
  z.data = {0.0, -0.01, 0.01};
  const ProbVolume p = sdm_to_seg(z, -1500.0);
  CHECK(p.fg[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.fg[1] == doctest::Approx(1.0 / (1.0 + std::exp(-15.0))).epsilon(1e-12));
  CHECK(p.fg[1] == doctest::Approx(0.9999997).epsilon(1e-7));
  CHECK(p.fg[2] == doctest::Approx(std::exp(-15.0) / (1.0 + std::exp(-15.0))).epsilon(1e-9));
  CHECK(p.fg[2] == doctest::Approx(3.06e-7).epsilon(0.01));

  SDMVolume extreme;
  extreme.shape = {2, 1, 1};
  extreme.data = {-1.0, 1.0};
  const ProbVolume pe = sdm_to_seg(extreme, -1500.0);
  CHECK(std::isfinite(pe.fg[0]));
  CHECK(std::isfinite(pe.fg[1]));
  CHECK(pe.fg[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pe.fg[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(sdm_to_seg(z, 0.0), std::runtime_error);
}

TEST_CASE("thresholded sdm_to_seg(sdm_from_mask(m)) reproduces the mask") {
  PhantomConfig cfg;
  cfg.shape = {24, 24, 24};
  cfg.root_radius = 2.5;
  cfg.branching_depth = 2;
  cfg.rng_seed = 77;
  const PhantomSample ph = generate_phantom(cfg);
  const SDMVolume sdm = sdm_from_mask(ph.label);
  const ProbVolume p = sdm_to_seg(sdm, -1500.0);
  for (std::size_t i = 0; i < p.size(); ++i)
    CHECK((p.fg[i] > 0.5 ? 1 : 0) == ph.label.data[i]);
}

TEST_CASE("ema update: degenerate decay, fixed point, scalar case") {
  std::vector<double> teacher{1.0, 2.0}, student{0.0, 4.0};
  auto t0 = teacher;
  ema_update(t0, teacher, 0.99);
  CHECK(t0 == teacher);  // teacher == student is a fixed point

  std::vector<double> t1 = teacher;
  ema_update(t1, student, 0.0);
  CHECK(t1 == student);

  std::vector<double> t2{1.0};
  ema_update(t2, std::vector<double>{0.0}, 0.99);
  CHECK(t2[0] == doctest::Approx(0.99).epsilon(1e-12));

  std::vector<double> wrong{1.0, 2.0, 3.0};
  CHECK_THROWS_AS(ema_update(wrong, student, 0.5), std::runtime_error);

  float tf[2] = {1.0f, 0.0f};
  const float sf[2] = {0.0f, 1.0f};
  ema_update(tf, sf, 2, 0.5);
  CHECK(tf[0] == doctest::Approx(0.5f));
  CHECK(tf[1] == doctest::Approx(0.5f));
}

TEST_CASE("gradient checks: every loss term matches central differences to 1e-4") {
  Rng rng(7);
  const std::size_t n = 27;  // 3^3

  SUBCASE("soft dice") {
    auto p = random_probs(n, rng);
    const auto g = random_mask(n, rng);
    std::vector<double> grad;
    soft_dice_loss_grad(p, g, grad);
    CHECK(max_grad_rel_error(p, [&] { return soft_dice_loss(p, g); }, grad) < 1e-4);
  }
  SUBCASE("cross entropy (foreground and background channels)") {
    auto fg = random_probs(n, rng, 0.1, 0.9);
    const auto g = random_mask(n, rng);
    std::vector<double> gfg, gbg;
    {
      ProbVolume pv = ProbVolume::from_foreground({3, 3, 3}, fg);
      cross_entropy_loss_grad(pv, g, gfg, gbg);
    }
    // vary fg while keeping bg fixed at its original values
    auto bg = fg;
    for (auto& v : bg) v = 1.0 - v;
    auto eval = [&] {
      ProbVolume pv;
      pv.shape = {3, 3, 3};
      pv.fg = fg;
      pv.bg = bg;
      return cross_entropy_loss(pv, g);
    };
    CHECK(max_grad_rel_error(fg, eval, gfg) < 1e-4);
    auto eval_bg = [&] {
      ProbVolume pv;
      pv.shape = {3, 3, 3};
      pv.fg = fg;
      pv.bg = bg;
      return cross_entropy_loss(pv, g);
    };
    CHECK(max_grad_rel_error(bg, eval_bg, gbg) < 1e-4);
  }
  SUBCASE("mse") {
    auto p = random_probs(n, rng, -1.0, 1.0);
    const auto t = random_probs(n, rng, -1.0, 1.0);
    std::vector<double> grad;
    mse_loss_grad(p, t, grad);
    CHECK(max_grad_rel_error(p, [&] { return mse_loss(p, t); }, grad) < 1e-4);
  }
  SUBCASE("bce on logits") {
    auto logits = random_probs(n, rng, -3.0, 3.0);
    std::vector<double> targets(n);
    for (auto& t : targets) t = rng.uniform() < 0.5 ? 0.0 : 1.0;
    std::vector<double> grad;
    bce_logits_loss_grad(logits, targets, grad);
    CHECK(max_grad_rel_error(logits, [&] { return bce_logits_loss(logits, targets); }, grad) <
          1e-4);
  }
  SUBCASE("consistency dice, both sides, masked and unmasked") {
    auto t = random_probs(n, rng);
    auto s = random_probs(n, rng);
    for (const bool use_mask : {false, true}) {
      std::vector<std::uint8_t> mask;
      if (use_mask) mask = random_mask(n, rng, 0.6);
      std::vector<double> gt_side, gs_side;
      consistency_dice_loss_grad(t, s, mask, &gt_side, &gs_side);
      CHECK(max_grad_rel_error(s, [&] { return consistency_dice_loss(t, s, mask); }, gs_side) <
            1e-4);
      CHECK(max_grad_rel_error(t, [&] { return consistency_dice_loss(t, s, mask); }, gt_side) <
            1e-4);
    }
  }
  SUBCASE("masked consistency via uncertainty volume") {
    const auto t_fg = random_probs(n, rng);
    auto s_fg = random_probs(n, rng);
    const ProbVolume t = ProbVolume::from_foreground({3, 3, 3}, t_fg);
    UncertaintyVolume u;
    u.shape = {3, 3, 3};
    u.data = random_probs(n, rng, 0.0, LN2);
    const double tau = 0.4;
    std::vector<double> grad;
    {
      const ProbVolume s = ProbVolume::from_foreground({3, 3, 3}, s_fg);
      masked_consistency_loss_grad(t, s, u, tau, grad);
    }
    auto eval = [&] {
      const ProbVolume s = ProbVolume::from_foreground({3, 3, 3}, s_fg);
      return masked_consistency_loss(t, s, u, tau);
    };
    CHECK(max_grad_rel_error(s_fg, eval, grad) < 1e-4);
  }
}

TEST_CASE("all loss terms are non-negative; dice-style losses stay below 1") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 64;
    const auto p = random_probs(n, rng, 0.0, 1.0);
    const auto t = random_probs(n, rng, 0.0, 1.0);
    const auto g = random_mask(n, rng);
    CHECK(soft_dice_loss(p, g) >= 0.0);
    CHECK(soft_dice_loss(p, g) <= 1.0);
    CHECK(consistency_dice_loss(t, p) >= 0.0);
    CHECK(consistency_dice_loss(t, p) <= 1.0);
    const ProbVolume pv = ProbVolume::from_foreground({4, 4, 4}, p);
    CHECK(cross_entropy_loss(pv, g) >= 0.0);
    CHECK(mse_loss(p, t) >= 0.0);
  }
}
