#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vesselbench/sslmath.hpp"
#include "vesselbench/unet.hpp"
#include "vesselbench/volume.hpp"

namespace vb {

enum class Method { supervised, mt, uamt, sassnet, dtc, mcnet };

Method method_from_name(const std::string& name);
std::string method_name(Method m);

struct TrainConfig {
  Method method = Method::supervised;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lambda_c_final = 0.01;
  double alpha = 0.3;           // SDM regression weight (SASSnet, DTC)
  double k = -1500.0;           // SDM-to-segmentation sharpness (DTC)
  double sharpen_temperature = 0.1;  // MC-Net soft-label sharpening
  double ema_decay = 0.99;
  double noise_std = 0.1;       // input perturbation, clipped at +-2 std
  int mc_passes = 8;
  int t_max = 300;
  std::array<int, 3> patch_size{32, 32, 32};
  int labeled_per_batch = 2;
  int unlabeled_per_batch = 2;
  std::uint64_t data_seed = 0;
  std::uint64_t weight_seed = 0;
  // backbone
  int base_width = 8;
  int depth = 3;
  double dropout_rate = 0.5;

  std::string to_json() const;
  static TrainConfig from_json_text(const std::string& text);
};

struct LossReport {
  int step = 0;
  double total = 0;
  double supervised = 0;    // Dice + cross-entropy on labeled patches
  double sup_dice = 0;      // Dice part of the supervised term
  double sup_ce = 0;        // cross-entropy part
  double consistency = 0;   // method-specific unsupervised term (unweighted)
  double sdm = 0;           // SDM regression MSE (unweighted)
  double adversarial = 0;   // generator-side BCE (unweighted)
  double disc = 0;          // discriminator BCE
  double lambda_c = 0;
  double tau = 0;
};

/// In-memory training pool. Images are expected min-max normalized; labels
/// exist only for the labeled subset (others may stay empty).
struct TrainingSet {
  std::vector<Volume3D> images;
  std::vector<LabelVolume> labels;
  std::vector<std::string> ids;
  std::vector<int> labeled;
  std::vector<int> unlabeled;
};

/// Per-volume min-max scaling to [0,1]; constant volumes map to 0.
Volume3D normalize_minmax(const Volume3D& v);

// ---- batches ----

struct Batch {
  Tensor labeled_images;                // [L,1,...]
  std::vector<std::uint8_t> labeled_gt; // flattened labels, batch order
  Tensor unlabeled_images;              // [U,1,...], may be empty
};

/// Deterministic patch sampler. Labeled draws and unlabeled draws use
/// separate streams so the labeled sequence does not depend on whether
/// unlabeled patches are requested. Half the labeled patches are centered on
/// random foreground voxels, the rest are uniform with rejection until the
/// patch holds at least one foreground voxel.
class PatchSampler {
 public:
  PatchSampler(const TrainingSet& data, const TrainConfig& cfg);
  Batch next();

 private:
  void sample_labeled(Tensor& out, std::vector<std::uint8_t>& gt, int slot);
  void sample_unlabeled(Tensor& out, int slot);

  const TrainingSet& data_;
  const TrainConfig& cfg_;
  Rng rng_labeled_, rng_unlabeled_;
  std::vector<std::vector<std::size_t>> fg_voxels_;  // per labeled volume
};

// ---- training state ----

struct SGD {
  double lr, momentum, weight_decay;
  std::vector<std::vector<float>> velocity;
  void step(std::vector<Param> params);
};

/// Everything one method needs for a step; built once per run.
struct TrainState {
  TrainConfig cfg;
  std::shared_ptr<UNet> student;
  std::shared_ptr<UNet> teacher;             // mt / uamt
  std::shared_ptr<Discriminator> disc;       // sassnet
  SGD opt;
  SGD disc_opt;
  Rng dropout_rng;
  Rng teacher_dropout_rng;
  Rng noise_rng;

  explicit TrainState(const TrainConfig& cfg);
};

// One optimizer update each; the report carries the weighted total and the
// unweighted individual terms.
LossReport step_supervised(const Batch& batch, TrainState& st, const ScheduleState& s);
LossReport step_mt(const Batch& batch, TrainState& st, const ScheduleState& s);
LossReport step_uamt(const Batch& batch, TrainState& st, const ScheduleState& s);
LossReport step_sassnet(const Batch& batch, TrainState& st, const ScheduleState& s);
LossReport step_dtc(const Batch& batch, TrainState& st, const ScheduleState& s);
LossReport step_mcnet(const Batch& batch, TrainState& st, const ScheduleState& s);

struct TrainResult {
  std::shared_ptr<UNet> model;    // the trained student
  std::shared_ptr<UNet> teacher;  // EMA model (mt / uamt only, else null)
  std::vector<LossReport> history;
};

/// Runs cfg.t_max steps of the configured method. When run_dir is non-empty,
/// writes config.json, history.csv and checkpoints/final.ckpt there.
TrainResult train(const TrainConfig& cfg, const TrainingSet& data,
                  const std::string& run_dir = "");

// ---- inference ----

/// Sliding-window foreground probability with overlap averaging; stride
/// defaults to half the patch. For two-decoder models the decoders' softmax
/// outputs are averaged.
ProbVolume predict_prob(UNet& model, const Volume3D& volume,
                        const std::array<int, 3>& patch_size);
LabelVolume predict_label(UNet& model, const Volume3D& volume,
                          const std::array<int, 3>& patch_size, double threshold = 0.5);

// ---- checkpoints ----

void save_checkpoint(const std::string& path, const TrainConfig& cfg, UNet& model);
struct Checkpoint {
  TrainConfig cfg;
  std::shared_ptr<UNet> model;
};
Checkpoint load_checkpoint(const std::string& path);

void write_history_csv(const std::string& path, const std::vector<LossReport>& history);

}  // namespace vb
