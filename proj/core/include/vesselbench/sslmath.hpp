#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "vesselbench/volume.hpp"

namespace vb {

/// Per-voxel class probabilities for the two classes (background, vessel).
struct ProbVolume {
  std::array<int, 3> shape{0, 0, 0};
  std::vector<double> fg;  // P(vessel)
  std::vector<double> bg;  // P(background)

  static ProbVolume from_foreground(const std::array<int, 3>& shape, std::vector<double> fg);
  std::size_t size() const { return fg.size(); }
  /// Checks values in [0,1] and per-voxel sums within `tol` of 1.
  void validate(double tol = 1e-5) const;
};

/// Per-voxel predictive entropy in nats; values in [0, ln 2] for two classes.
struct UncertaintyVolume {
  std::array<int, 3> shape{0, 0, 0};
  std::vector<double> data;
};

/// Signed distance map normalized to [-1, 1], negative strictly inside.
struct SDMVolume {
  std::array<int, 3> shape{0, 0, 0};
  std::vector<double> data;
};

struct ScheduleState {
  std::int64_t t = 0;
  std::int64_t t_max = 1;
  double lambda_c_final = 0.01;
};

// ---- supervised losses ----

/// Soft Dice loss 1 - (2*sum(p*g)+eps) / (sum(p)+sum(g)+eps), eps = 1e-5.
double soft_dice_loss(const std::vector<double>& pred_fg, const std::vector<std::uint8_t>& gt);
double soft_dice_loss_grad(const std::vector<double>& pred_fg, const std::vector<std::uint8_t>& gt,
                           std::vector<double>& grad_fg);

/// Mean over voxels of -log P(true class), probabilities clamped to
/// [1e-7, 1-1e-7].
double cross_entropy_loss(const ProbVolume& pred, const std::vector<std::uint8_t>& gt);
double cross_entropy_loss_grad(const ProbVolume& pred, const std::vector<std::uint8_t>& gt,
                               std::vector<double>& grad_fg, std::vector<double>& grad_bg);

/// Mean squared error (SDM regression head).
double mse_loss(const std::vector<double>& pred, const std::vector<double>& target);
double mse_loss_grad(const std::vector<double>& pred, const std::vector<double>& target,
                     std::vector<double>& grad);

/// Numerically stable binary cross-entropy on raw logits.
double bce_logits_loss(const std::vector<double>& logits, const std::vector<double>& targets);
double bce_logits_loss_grad(const std::vector<double>& logits, const std::vector<double>& targets,
                            std::vector<double>& grad);

// ---- consistency losses ----

/// Soft Dice between two probability fields with the squared-sum denominator
/// 1 - (2*sum(t*s)+eps) / (sum(t^2)+sum(s^2)+eps), so identical fields give
/// exactly zero. `mask` (optional, may be empty) restricts both numerator and
/// denominator; an all-masked-out call returns 0.
double consistency_dice_loss(const std::vector<double>& target_fg,
                             const std::vector<double>& student_fg,
                             const std::vector<std::uint8_t>& mask = {});
/// Gradients of the above; pass nullptr to skip either side.
double consistency_dice_loss_grad(const std::vector<double>& target_fg,
                                  const std::vector<double>& student_fg,
                                  const std::vector<std::uint8_t>& mask,
                                  std::vector<double>* grad_target,
                                  std::vector<double>* grad_student);

/// Consistency restricted to voxels whose uncertainty falls below tau.
double masked_consistency_loss(const ProbVolume& teacher, const ProbVolume& student,
                               const UncertaintyVolume& u, double tau);
double masked_consistency_loss_grad(const ProbVolume& teacher, const ProbVolume& student,
                                    const UncertaintyVolume& u, double tau,
                                    std::vector<double>& grad_student_fg);

// ---- schedules ----

/// lambda_c(t) = lambda_c_final * exp(-5 (1 - t/t_max)^2).
double gaussian_rampup(const ScheduleState& s);

/// tau(t) = ln(2) * (3/4 + 1/4 exp(-5 (1 - t/t_max)^2)).
double uncertainty_threshold(const ScheduleState& s);

// ---- uncertainty, sharpening, signed distance maps ----

/// Entropy of the mean prediction over N stochastic passes (0 ln 0 := 0).
UncertaintyVolume uncertainty_map(const std::vector<ProbVolume>& passes);

/// Temperature sharpening p^(1/T) / (p^(1/T) + (1-p)^(1/T)) on the
/// foreground channel.
ProbVolume sharpen(const ProbVolume& p, double temperature);

/// Euclidean distance transform, negated inside, each side normalized by its
/// own maximum. Throws on empty or full masks (the SDM is undefined there).
SDMVolume sdm_from_mask(const LabelVolume& label);

/// T(z) = (1 + exp(-k z))^-1, overflow-free for |k z| up to ~1500.
ProbVolume sdm_to_seg(const SDMVolume& z, double k);
/// Same, also emitting dT/dz = k T (1-T) per voxel.
ProbVolume sdm_to_seg_with_grad(const SDMVolume& z, double k, std::vector<double>& dT_dz);

/// Stable logistic sigmoid.
double stable_sigmoid(double x);

// ---- EMA weight averaging ----

/// teacher <- decay * teacher + (1 - decay) * student, elementwise.
/// Throws if the two collections differ in length.
void ema_update(float* teacher, const float* student, std::size_t n, double decay);
void ema_update(std::vector<double>& teacher, const std::vector<double>& student, double decay);

}  // namespace vb
