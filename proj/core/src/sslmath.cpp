#include "vesselbench/sslmath.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vesselbench/edt.hpp"

namespace vb {
namespace {

constexpr double DICE_EPS = 1e-5;
constexpr double CE_CLAMP = 1e-7;
constexpr double LN2 = 0.6931471805599453;

void require(bool cond, const char* msg) {
  if (!cond) throw std::runtime_error(msg);
}

double ramp_kernel(const ScheduleState& s) {
  require(s.t_max > 0, "schedule: t_max must be > 0");
  require(s.t >= 0 && s.t <= s.t_max, "schedule: t must lie in [0, t_max]");
  const double r = 1.0 - static_cast<double>(s.t) / static_cast<double>(s.t_max);
  return std::exp(-5.0 * r * r);
}

}  // namespace

ProbVolume ProbVolume::from_foreground(const std::array<int, 3>& shape, std::vector<double> fg) {
  ProbVolume p;
  p.shape = shape;
  p.bg.resize(fg.size());
  for (std::size_t i = 0; i < fg.size(); ++i) p.bg[i] = 1.0 - fg[i];
  p.fg = std::move(fg);
  return p;
}

void ProbVolume::validate(double tol) const {
  require(fg.size() == bg.size(), "ProbVolume: channel size mismatch");
  for (std::size_t i = 0; i < fg.size(); ++i) {
    const bool in01 = fg[i] >= -tol && fg[i] <= 1.0 + tol && bg[i] >= -tol && bg[i] <= 1.0 + tol;
    require(in01 && std::fabs(fg[i] + bg[i] - 1.0) <= tol, "ProbVolume: not a probability field");
  }
}

// ---- supervised losses ----

double soft_dice_loss(const std::vector<double>& pred_fg, const std::vector<std::uint8_t>& gt) {
  require(pred_fg.size() == gt.size(), "soft_dice_loss: shape mismatch");
  double inter = 0, psum = 0, gsum = 0;
  for (std::size_t i = 0; i < pred_fg.size(); ++i) {
    inter += pred_fg[i] * gt[i];
    psum += pred_fg[i];
    gsum += gt[i];
  }
  return 1.0 - (2.0 * inter + DICE_EPS) / (psum + gsum + DICE_EPS);
}

double soft_dice_loss_grad(const std::vector<double>& pred_fg, const std::vector<std::uint8_t>& gt,
                           std::vector<double>& grad_fg) {
  require(pred_fg.size() == gt.size(), "soft_dice_loss: shape mismatch");
  double inter = 0, psum = 0, gsum = 0;
  for (std::size_t i = 0; i < pred_fg.size(); ++i) {
    inter += pred_fg[i] * gt[i];
    psum += pred_fg[i];
    gsum += gt[i];
  }
  const double num = 2.0 * inter + DICE_EPS;
  const double den = psum + gsum + DICE_EPS;
  grad_fg.assign(pred_fg.size(), 0.0);
  for (std::size_t i = 0; i < pred_fg.size(); ++i)
    grad_fg[i] = -(2.0 * gt[i] * den - num) / (den * den);
  return 1.0 - num / den;
}

double cross_entropy_loss(const ProbVolume& pred, const std::vector<std::uint8_t>& gt) {
  require(pred.size() == gt.size(), "cross_entropy_loss: shape mismatch");
  require(!gt.empty(), "cross_entropy_loss: empty input");
  double sum = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double p = std::clamp(gt[i] ? pred.fg[i] : pred.bg[i], CE_CLAMP, 1.0 - CE_CLAMP);
    sum -= std::log(p);
  }
  return sum / static_cast<double>(gt.size());
}

double cross_entropy_loss_grad(const ProbVolume& pred, const std::vector<std::uint8_t>& gt,
                               std::vector<double>& grad_fg, std::vector<double>& grad_bg) {
  require(pred.size() == gt.size(), "cross_entropy_loss: shape mismatch");
  require(!gt.empty(), "cross_entropy_loss: empty input");
  const double n = static_cast<double>(gt.size());
  grad_fg.assign(gt.size(), 0.0);
  grad_bg.assign(gt.size(), 0.0);
  double sum = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double raw = gt[i] ? pred.fg[i] : pred.bg[i];
    const double p = std::clamp(raw, CE_CLAMP, 1.0 - CE_CLAMP);
    sum -= std::log(p);
    if (raw > CE_CLAMP && raw < 1.0 - CE_CLAMP) {
      if (gt[i])
        grad_fg[i] = -1.0 / (n * p);
      else
        grad_bg[i] = -1.0 / (n * p);
    }
  }
  return sum / n;
}

double mse_loss(const std::vector<double>& pred, const std::vector<double>& target) {
  require(pred.size() == target.size(), "mse_loss: shape mismatch");
  require(!pred.empty(), "mse_loss: empty input");
  double sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    sum += d * d;
  }
  return sum / static_cast<double>(pred.size());
}

double mse_loss_grad(const std::vector<double>& pred, const std::vector<double>& target,
                     std::vector<double>& grad) {
  require(pred.size() == target.size(), "mse_loss: shape mismatch");
  require(!pred.empty(), "mse_loss: empty input");
  const double n = static_cast<double>(pred.size());
  grad.assign(pred.size(), 0.0);
  double sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    sum += d * d;
    grad[i] = 2.0 * d / n;
  }
  return sum / n;
}

double bce_logits_loss(const std::vector<double>& logits, const std::vector<double>& targets) {
  require(logits.size() == targets.size(), "bce_logits_loss: shape mismatch");
  require(!logits.empty(), "bce_logits_loss: empty input");
  double sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i], y = targets[i];
    sum += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::fabs(x)));
  }
  return sum / static_cast<double>(logits.size());
}

double bce_logits_loss_grad(const std::vector<double>& logits, const std::vector<double>& targets,
                            std::vector<double>& grad) {
  require(logits.size() == targets.size(), "bce_logits_loss: shape mismatch");
  require(!logits.empty(), "bce_logits_loss: empty input");
  const double n = static_cast<double>(logits.size());
  grad.assign(logits.size(), 0.0);
  double sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i], y = targets[i];
    sum += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::fabs(x)));
    grad[i] = (stable_sigmoid(x) - y) / n;
  }
  return sum / n;
}

// ---- consistency losses ----

namespace {

struct DiceSums {
  double inter = 0, t2 = 0, s2 = 0;
  std::size_t count = 0;
};

DiceSums consistency_sums(const std::vector<double>& t, const std::vector<double>& s,
                          const std::vector<std::uint8_t>& mask) {
  DiceSums d;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    d.inter += t[i] * s[i];
    d.t2 += t[i] * t[i];
    d.s2 += s[i] * s[i];
    ++d.count;
  }
  return d;
}

}  // namespace

double consistency_dice_loss(const std::vector<double>& target_fg,
                             const std::vector<double>& student_fg,
                             const std::vector<std::uint8_t>& mask) {
  require(target_fg.size() == student_fg.size(), "consistency_dice_loss: shape mismatch");
  require(mask.empty() || mask.size() == target_fg.size(), "consistency_dice_loss: mask mismatch");
  const DiceSums d = consistency_sums(target_fg, student_fg, mask);
  if (d.count == 0) return 0.0;
  return 1.0 - (2.0 * d.inter + DICE_EPS) / (d.t2 + d.s2 + DICE_EPS);
}

double consistency_dice_loss_grad(const std::vector<double>& target_fg,
                                  const std::vector<double>& student_fg,
                                  const std::vector<std::uint8_t>& mask,
                                  std::vector<double>* grad_target,
                                  std::vector<double>* grad_student) {
  require(target_fg.size() == student_fg.size(), "consistency_dice_loss: shape mismatch");
  require(mask.empty() || mask.size() == target_fg.size(), "consistency_dice_loss: mask mismatch");
  if (grad_target) grad_target->assign(target_fg.size(), 0.0);
  if (grad_student) grad_student->assign(student_fg.size(), 0.0);
  const DiceSums d = consistency_sums(target_fg, student_fg, mask);
  if (d.count == 0) return 0.0;
  const double num = 2.0 * d.inter + DICE_EPS;
  const double den = d.t2 + d.s2 + DICE_EPS;
  for (std::size_t i = 0; i < target_fg.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    if (grad_student)
      (*grad_student)[i] = -(2.0 * target_fg[i] * den - num * 2.0 * student_fg[i]) / (den * den);
    if (grad_target)
      (*grad_target)[i] = -(2.0 * student_fg[i] * den - num * 2.0 * target_fg[i]) / (den * den);
  }
  return 1.0 - num / den;
}

double masked_consistency_loss(const ProbVolume& teacher, const ProbVolume& student,
                               const UncertaintyVolume& u, double tau) {
  require(teacher.size() == student.size() && teacher.size() == u.data.size(),
          "masked_consistency_loss: shape mismatch");
  std::vector<std::uint8_t> mask(u.data.size());
  for (std::size_t i = 0; i < u.data.size(); ++i) mask[i] = u.data[i] < tau ? 1 : 0;
  return consistency_dice_loss(teacher.fg, student.fg, mask);
}

double masked_consistency_loss_grad(const ProbVolume& teacher, const ProbVolume& student,
                                    const UncertaintyVolume& u, double tau,
                                    std::vector<double>& grad_student_fg) {
  require(teacher.size() == student.size() && teacher.size() == u.data.size(),
          "masked_consistency_loss: shape mismatch");
  std::vector<std::uint8_t> mask(u.data.size());
  for (std::size_t i = 0; i < u.data.size(); ++i) mask[i] = u.data[i] < tau ? 1 : 0;
  return consistency_dice_loss_grad(teacher.fg, student.fg, mask, nullptr, &grad_student_fg);
}

// ---- schedules ----

double gaussian_rampup(const ScheduleState& s) {
  require(s.lambda_c_final >= 0, "gaussian_rampup: lambda_c_final must be >= 0");
  return s.lambda_c_final * ramp_kernel(s);
}

double uncertainty_threshold(const ScheduleState& s) {
  return LN2 * (0.75 + 0.25 * ramp_kernel(s));
}

// ---- uncertainty, sharpening, SDM ----

UncertaintyVolume uncertainty_map(const std::vector<ProbVolume>& passes) {
  require(!passes.empty(), "uncertainty_map: needs at least one pass");
  const std::size_t n = passes[0].size();
  for (const auto& p : passes)
    require(p.size() == n && p.shape == passes[0].shape, "uncertainty_map: shape mismatch");

  UncertaintyVolume u;
  u.shape = passes[0].shape;
  u.data.assign(n, 0.0);
  const double inv_n = 1.0 / static_cast<double>(passes.size());
  for (std::size_t i = 0; i < n; ++i) {
    double mean_fg = 0, mean_bg = 0;
    for (const auto& p : passes) {
      mean_fg += p.fg[i];
      mean_bg += p.bg[i];
    }
    mean_fg *= inv_n;
    mean_bg *= inv_n;
    double h = 0;
    if (mean_fg > 0) h -= mean_fg * std::log(mean_fg);
    if (mean_bg > 0) h -= mean_bg * std::log(mean_bg);
    u.data[i] = h;
  }
  return u;
}

ProbVolume sharpen(const ProbVolume& p, double temperature) {
  require(temperature > 0, "sharpen: temperature must be > 0");
  const double e = 1.0 / temperature;
  std::vector<double> fg(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double a = std::pow(p.fg[i], e);
    const double b = std::pow(1.0 - p.fg[i], e);
    fg[i] = a + b > 0 ? a / (a + b) : 0.5;
  }
  return ProbVolume::from_foreground(p.shape, std::move(fg));
}

SDMVolume sdm_from_mask(const LabelVolume& label) {
  const std::size_t fgc = label.foreground_count();
  require(fgc > 0, "sdm_from_mask: empty label");
  require(fgc < label.size(), "sdm_from_mask: full label");

  const std::vector<double> in2 = squared_edt_to_background(label.shape, label.data.data());
  const std::vector<double> out2 = squared_edt(label.shape, label.data.data());

  double max_in = 0, max_out = 0;
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (label.data[i])
      max_in = std::max(max_in, in2[i]);
    else
      max_out = std::max(max_out, out2[i]);
  }
  max_in = std::sqrt(max_in);
  max_out = std::sqrt(max_out);

  SDMVolume sdm;
  sdm.shape = label.shape;
  sdm.data.resize(label.size());
  for (std::size_t i = 0; i < label.size(); ++i)
    sdm.data[i] = label.data[i] ? -std::sqrt(in2[i]) / max_in : std::sqrt(out2[i]) / max_out;
  return sdm;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ProbVolume sdm_to_seg(const SDMVolume& z, double k) {
  require(k != 0, "sdm_to_seg: k must be nonzero");
  std::vector<double> fg(z.data.size());
  for (std::size_t i = 0; i < z.data.size(); ++i) fg[i] = stable_sigmoid(k * z.data[i]);
  return ProbVolume::from_foreground(z.shape, std::move(fg));
}

ProbVolume sdm_to_seg_with_grad(const SDMVolume& z, double k, std::vector<double>& dT_dz) {
  require(k != 0, "sdm_to_seg: k must be nonzero");
  std::vector<double> fg(z.data.size());
  dT_dz.resize(z.data.size());
  for (std::size_t i = 0; i < z.data.size(); ++i) {
    const double t = stable_sigmoid(k * z.data[i]);
    fg[i] = t;
    dT_dz[i] = k * t * (1.0 - t);
  }
  return ProbVolume::from_foreground(z.shape, std::move(fg));
}

// ---- EMA ----

void ema_update(float* teacher, const float* student, std::size_t n, double decay) {
  require(decay >= 0 && decay < 1, "ema_update: decay must be in [0,1)");
  for (std::size_t i = 0; i < n; ++i)
    teacher[i] = static_cast<float>(decay * teacher[i] + (1.0 - decay) * student[i]);
}

void ema_update(std::vector<double>& teacher, const std::vector<double>& student, double decay) {
  require(teacher.size() == student.size(), "ema_update: structural mismatch");
  require(decay >= 0 && decay < 1, "ema_update: decay must be in [0,1)");
  for (std::size_t i = 0; i < teacher.size(); ++i)
    teacher[i] = decay * teacher[i] + (1.0 - decay) * student[i];
}

}  // namespace vb
