#include "vesselbench/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace vb {

using json = nlohmann::json;

Method method_from_name(const std::string& name) {
  if (name == "supervised") return Method::supervised;
  if (name == "mt") return Method::mt;
  if (name == "uamt") return Method::uamt;
  if (name == "sassnet") return Method::sassnet;
  if (name == "dtc") return Method::dtc;
  if (name == "mcnet") return Method::mcnet;
  throw std::runtime_error("unknown method name '" + name + "'");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::supervised: return "supervised";
    case Method::mt: return "mt";
    case Method::uamt: return "uamt";
    case Method::sassnet: return "sassnet";
    case Method::dtc: return "dtc";
    case Method::mcnet: return "mcnet";
  }
  return "unknown";
}

std::string TrainConfig::to_json() const {
  json j;
  j["method"] = method_name(method);
  j["lr"] = lr;
  j["momentum"] = momentum;
  j["weight_decay"] = weight_decay;
  j["lambda_c_final"] = lambda_c_final;
  j["alpha"] = alpha;
  j["k"] = k;
  j["sharpen_temperature"] = sharpen_temperature;
  j["ema_decay"] = ema_decay;
  j["noise_std"] = noise_std;
  j["mc_passes"] = mc_passes;
  j["t_max"] = t_max;
  j["patch_size"] = {patch_size[0], patch_size[1], patch_size[2]};
  j["labeled_per_batch"] = labeled_per_batch;
  j["unlabeled_per_batch"] = unlabeled_per_batch;
  j["data_seed"] = data_seed;
  j["weight_seed"] = weight_seed;
  j["base_width"] = base_width;
  j["depth"] = depth;
  j["dropout_rate"] = dropout_rate;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("train config: invalid JSON: ") + e.what());
  }
  TrainConfig c;
  c.method = method_from_name(j.value("method", std::string("supervised")));
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.lambda_c_final = j.value("lambda_c_final", c.lambda_c_final);
  c.alpha = j.value("alpha", c.alpha);
  c.k = j.value("k", c.k);
  c.sharpen_temperature = j.value("sharpen_temperature", c.sharpen_temperature);
  c.ema_decay = j.value("ema_decay", c.ema_decay);
  c.noise_std = j.value("noise_std", c.noise_std);
  c.mc_passes = j.value("mc_passes", c.mc_passes);
  c.t_max = j.value("t_max", c.t_max);
  if (j.contains("patch_size")) {
    const auto p = j["patch_size"].get<std::vector<int>>();
    if (p.size() != 3) throw std::runtime_error("train config: patch_size must have 3 entries");
    c.patch_size = {p[0], p[1], p[2]};
  }
  c.labeled_per_batch = j.value("labeled_per_batch", c.labeled_per_batch);
  c.unlabeled_per_batch = j.value("unlabeled_per_batch", c.unlabeled_per_batch);
  c.data_seed = j.value("data_seed", c.data_seed);
  c.weight_seed = j.value("weight_seed", c.weight_seed);
  c.base_width = j.value("base_width", c.base_width);
  c.depth = j.value("depth", c.depth);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  return c;
}

Volume3D normalize_minmax(const Volume3D& v) {
  Volume3D out = v;
  float lo = 3.0e38f, hi = -3.0e38f;
  for (const float x : v.data) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  const float range = hi - lo;
  if (range <= 0) {
    std::fill(out.data.begin(), out.data.end(), 0.0f);
    return out;
  }
  for (auto& x : out.data) x = (x - lo) / range;
  return out;
}

// ---- patch sampling ----

namespace {

void copy_image_patch(const Volume3D& vol, const std::array<int, 3>& origin,
                      const std::array<int, 3>& size, float* dst) {
  for (int z = 0; z < size[2]; ++z)
    for (int y = 0; y < size[1]; ++y) {
      const float* src = vol.data.data() + vol.index(origin[0], origin[1] + y, origin[2] + z);
      std::copy(src, src + size[0], dst + (static_cast<std::size_t>(z) * size[1] + y) * size[0]);
    }
}

void copy_label_patch(const LabelVolume& vol, const std::array<int, 3>& origin,
                      const std::array<int, 3>& size, std::uint8_t* dst) {
  for (int z = 0; z < size[2]; ++z)
    for (int y = 0; y < size[1]; ++y) {
      const std::uint8_t* src = vol.data.data() + vol.index(origin[0], origin[1] + y, origin[2] + z);
      std::copy(src, src + size[0], dst + (static_cast<std::size_t>(z) * size[1] + y) * size[0]);
    }
}

bool patch_has_foreground(const LabelVolume& label, const std::array<int, 3>& origin,
                          const std::array<int, 3>& size) {
  for (int z = 0; z < size[2]; ++z)
    for (int y = 0; y < size[1]; ++y) {
      const std::uint8_t* row = label.data.data() + label.index(origin[0], origin[1] + y, origin[2] + z);
      for (int x = 0; x < size[0]; ++x)
        if (row[x]) return true;
    }
  return false;
}

}  // namespace

PatchSampler::PatchSampler(const TrainingSet& data, const TrainConfig& cfg)
    : data_(data),
      cfg_(cfg),
      rng_labeled_(derive_seed(cfg.data_seed, "labeled-patches")),
      rng_unlabeled_(derive_seed(cfg.data_seed, "unlabeled-patches")) {
  fg_voxels_.resize(data.labeled.size());
  for (std::size_t i = 0; i < data.labeled.size(); ++i) {
    const LabelVolume& lab = data.labels[data.labeled[i]];
    for (std::size_t v = 0; v < lab.data.size(); ++v)
      if (lab.data[v]) fg_voxels_[i].push_back(v);
    if (fg_voxels_[i].empty())
      throw std::runtime_error("PatchSampler: labeled volume has empty label");
  }
}

void PatchSampler::sample_labeled(Tensor& out, std::vector<std::uint8_t>& gt, int slot) {
  const auto& p = cfg_.patch_size;
  const int pick = rng_labeled_.uniform_int(0, static_cast<int>(data_.labeled.size()) - 1);
  const int vol_idx = data_.labeled[pick];
  const Volume3D& img = data_.images[vol_idx];
  const LabelVolume& lab = data_.labels[vol_idx];

  std::array<int, 3> origin{};
  const bool center_on_fg = rng_labeled_.uniform() < 0.5;
  if (center_on_fg) {
    const auto& fg = fg_voxels_[pick];
    const std::size_t v = fg[static_cast<std::size_t>(rng_labeled_.uniform_int(0, static_cast<int>(fg.size()) - 1))];
    const int vx = static_cast<int>(v % img.shape[0]);
    const int vy = static_cast<int>((v / img.shape[0]) % img.shape[1]);
    const int vz = static_cast<int>(v / (static_cast<std::size_t>(img.shape[0]) * img.shape[1]));
    const int c[3] = {vx, vy, vz};
    for (int a = 0; a < 3; ++a)
      origin[a] = std::clamp(c[a] - p[a] / 2, 0, img.shape[a] - p[a]);
  } else {
    bool ok = false;
    for (int attempt = 0; attempt < 20 && !ok; ++attempt) {
      for (int a = 0; a < 3; ++a) origin[a] = rng_labeled_.uniform_int(0, img.shape[a] - p[a]);
      ok = patch_has_foreground(lab, origin, p);
    }
    if (!ok) {
      const auto& fg = fg_voxels_[pick];
      const std::size_t v = fg[static_cast<std::size_t>(rng_labeled_.uniform_int(0, static_cast<int>(fg.size()) - 1))];
      const int c[3] = {static_cast<int>(v % img.shape[0]),
                        static_cast<int>((v / img.shape[0]) % img.shape[1]),
                        static_cast<int>(v / (static_cast<std::size_t>(img.shape[0]) * img.shape[1]))};
      for (int a = 0; a < 3; ++a)
        origin[a] = std::clamp(c[a] - p[a] / 2, 0, img.shape[a] - p[a]);
    }
  }

  copy_image_patch(img, origin, p, out.plane(slot, 0));
  copy_label_patch(lab, origin, p,
                   gt.data() + static_cast<std::size_t>(slot) * p[0] * p[1] * p[2]);
}

void PatchSampler::sample_unlabeled(Tensor& out, int slot) {
  const auto& p = cfg_.patch_size;
  const int pick = rng_unlabeled_.uniform_int(0, static_cast<int>(data_.unlabeled.size()) - 1);
  const Volume3D& img = data_.images[data_.unlabeled[pick]];
  std::array<int, 3> origin{};
  for (int a = 0; a < 3; ++a) origin[a] = rng_unlabeled_.uniform_int(0, img.shape[a] - p[a]);
  copy_image_patch(img, origin, p, out.plane(slot, 0));
}

Batch PatchSampler::next() {
  const auto& p = cfg_.patch_size;
  const std::size_t voxels = static_cast<std::size_t>(p[0]) * p[1] * p[2];
  Batch b;
  b.labeled_images = Tensor(cfg_.labeled_per_batch, 1, p[2], p[1], p[0]);
  b.labeled_gt.assign(voxels * cfg_.labeled_per_batch, 0);
  for (int i = 0; i < cfg_.labeled_per_batch; ++i) sample_labeled(b.labeled_images, b.labeled_gt, i);

  const bool wants_unlabeled = cfg_.method != Method::supervised && cfg_.unlabeled_per_batch > 0;
  if (wants_unlabeled) {
    if (data_.unlabeled.empty())
      throw std::runtime_error("PatchSampler: method needs unlabeled volumes but none were given");
    b.unlabeled_images = Tensor(cfg_.unlabeled_per_batch, 1, p[2], p[1], p[0]);
    for (int i = 0; i < cfg_.unlabeled_per_batch; ++i) sample_unlabeled(b.unlabeled_images, i);
  }
  return b;
}

// ---- optimizer ----

void SGD::step(std::vector<Param> params) {
  if (velocity.empty()) {
    velocity.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) velocity[i].assign(params[i].value->size(), 0.0f);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = *params[i].value;
    auto& g = *params[i].grad;
    auto& v = velocity[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const float grad = g[j] + static_cast<float>(weight_decay) * w[j];
      v[j] = static_cast<float>(momentum) * v[j] + grad;
      w[j] -= static_cast<float>(lr) * v[j];
    }
  }
}

// ---- shared step machinery ----

namespace {

UNetConfig backbone_config(const TrainConfig& cfg) {
  UNetConfig u;
  u.in_channels = 1;
  u.base_width = cfg.base_width;
  u.depth = cfg.depth;
  u.dropout_rate = cfg.dropout_rate;
  u.sdm_head = cfg.method == Method::sassnet || cfg.method == Method::dtc;
  u.decoders = cfg.method == Method::mcnet ? 2 : 1;
  u.weight_seed = cfg.weight_seed;
  return u;
}

void flatten_fg(const Tensor& probs, int item0, int item1, std::vector<double>& fg) {
  const std::size_t m = probs.spatial();
  fg.resize(static_cast<std::size_t>(item1 - item0) * m);
  for (int n = item0; n < item1; ++n) {
    const float* p = probs.plane(n, 1);
    for (std::size_t i = 0; i < m; ++i) fg[static_cast<std::size_t>(n - item0) * m + i] = p[i];
  }
}

ProbVolume flatten_prob_volume(const Tensor& probs, int item0, int item1) {
  const std::size_t m = probs.spatial();
  ProbVolume pv;
  pv.shape = {static_cast<int>(m), item1 - item0, 1};
  pv.fg.resize(static_cast<std::size_t>(item1 - item0) * m);
  pv.bg.resize(pv.fg.size());
  for (int n = item0; n < item1; ++n) {
    const float* f = probs.plane(n, 1);
    const float* b = probs.plane(n, 0);
    for (std::size_t i = 0; i < m; ++i) {
      pv.fg[static_cast<std::size_t>(n - item0) * m + i] = f[i];
      pv.bg[static_cast<std::size_t>(n - item0) * m + i] = b[i];
    }
  }
  return pv;
}

void scatter_grad(Tensor& gprobs, int channel, int item0, const std::vector<double>& g,
                  double scale) {
  const std::size_t m = gprobs.spatial();
  const int items = static_cast<int>(g.size() / m);
  for (int n = 0; n < items; ++n) {
    float* dst = gprobs.plane(item0 + n, channel);
    const double* src = g.data() + static_cast<std::size_t>(n) * m;
    for (std::size_t i = 0; i < m; ++i) dst[i] += static_cast<float>(scale * src[i]);
  }
}

struct SupervisedTerm {
  double dice = 0, ce = 0;
};

// Dice + cross-entropy of the labeled prefix, accumulated into gprobs.
SupervisedTerm supervised_seg_term(const Tensor& probs, const std::vector<std::uint8_t>& gt,
                                   int labeled_items, Tensor& gprobs) {
  ProbVolume pv = flatten_prob_volume(probs, 0, labeled_items);
  SupervisedTerm t;
  std::vector<double> gd, gce_fg, gce_bg;
  t.dice = soft_dice_loss_grad(pv.fg, gt, gd);
  t.ce = cross_entropy_loss_grad(pv, gt, gce_fg, gce_bg);
  scatter_grad(gprobs, 1, 0, gd, 1.0);
  scatter_grad(gprobs, 1, 0, gce_fg, 1.0);
  scatter_grad(gprobs, 0, 0, gce_bg, 1.0);
  return t;
}

Tensor add_clipped_noise(const Tensor& x, double std_dev, Rng& rng) {
  if (std_dev <= 0) return x;
  Tensor out = x;
  const double clip = 2.0 * std_dev;
  for (auto& v : out.v)
    v += static_cast<float>(std::clamp(rng.normal(0.0, std_dev), -clip, clip));
  return out;
}

// SDM regression targets for the labeled prefix; patches whose label is
// empty or full carry no SDM and are skipped.
struct SdmTarget {
  std::vector<double> values;       // flattened, zeros where invalid
  std::vector<std::uint8_t> valid;  // per item
  int valid_count = 0;
};

SdmTarget sdm_targets(const std::vector<std::uint8_t>& gt, const std::array<int, 3>& patch) {
  const std::size_t m = static_cast<std::size_t>(patch[0]) * patch[1] * patch[2];
  const int items = static_cast<int>(gt.size() / m);
  SdmTarget t;
  t.values.assign(gt.size(), 0.0);
  t.valid.assign(items, 0);
  for (int n = 0; n < items; ++n) {
    LabelVolume piece({patch[0], patch[1], patch[2]}, {1, 1, 1});
    std::copy(gt.begin() + n * m, gt.begin() + (n + 1) * m, piece.data.begin());
    const std::size_t fg = piece.foreground_count();
    if (fg == 0 || fg == piece.size()) continue;
    const SDMVolume sdm = sdm_from_mask(piece);
    std::copy(sdm.data.begin(), sdm.data.end(), t.values.begin() + n * m);
    t.valid[n] = 1;
    ++t.valid_count;
  }
  return t;
}

// MSE over valid items only; gradient goes into gsdm (channel 0).
double sdm_mse_term(const Tensor& sdm_pred, const SdmTarget& target, int labeled_items,
                    Tensor& gsdm, double scale) {
  if (target.valid_count == 0) return 0.0;
  const std::size_t m = sdm_pred.spatial();
  double loss = 0;
  for (int n = 0; n < labeled_items; ++n) {
    if (!target.valid[n]) continue;
    const float* p = sdm_pred.plane(n, 0);
    float* gp = gsdm.plane(n, 0);
    const double* tv = target.values.data() + static_cast<std::size_t>(n) * m;
    const double inv = 1.0 / (static_cast<double>(target.valid_count) * static_cast<double>(m));
    for (std::size_t i = 0; i < m; ++i) {
      const double d = p[i] - tv[i];
      loss += d * d * inv;
      gp[i] += static_cast<float>(scale * 2.0 * d * inv);
    }
  }
  return loss;
}

Tensor concat_batch(const Tensor& a, const Tensor& b) {
  if (b.size() == 0) return a;
  if (a.c() != b.c() || a.d() != b.d() || a.h() != b.h() || a.w() != b.w())
    throw std::runtime_error("concat_batch: shape mismatch");
  Tensor out(a.n() + b.n(), a.c(), a.d(), a.h(), a.w());
  std::copy(a.v.begin(), a.v.end(), out.v.begin());
  std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
  return out;
}

void check_finite(const LossReport& r) {
  if (!std::isfinite(r.total) || !std::isfinite(r.supervised) || !std::isfinite(r.consistency) ||
      !std::isfinite(r.sdm) || !std::isfinite(r.adversarial))
    throw std::runtime_error("training diverged: non-finite loss");
}

void ema_teacher_update(UNet& teacher, UNet& student, double decay) {
  auto tp = teacher.params();
  auto sp = student.params();
  if (tp.size() != sp.size()) throw std::runtime_error("ema: structural mismatch");
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (tp[i].value->size() != sp[i].value->size())
      throw std::runtime_error("ema: structural mismatch");
    ema_update(tp[i].value->data(), sp[i].value->data(), tp[i].value->size(), decay);
  }
}

}  // namespace

TrainState::TrainState(const TrainConfig& cfg_in)
    : cfg(cfg_in),
      opt{cfg_in.lr, cfg_in.momentum, cfg_in.weight_decay, {}},
      disc_opt{cfg_in.lr * 0.1, cfg_in.momentum, cfg_in.weight_decay, {}},
      dropout_rng(derive_seed(cfg_in.weight_seed, "dropout-student")),
      teacher_dropout_rng(derive_seed(cfg_in.weight_seed, "dropout-teacher")),
      noise_rng(derive_seed(cfg_in.data_seed, "input-noise")) {
  student = std::make_shared<UNet>(backbone_config(cfg));
  if (cfg.method == Method::mt || cfg.method == Method::uamt)
    teacher = std::make_shared<UNet>(backbone_config(cfg));  // same seed: identical init
  if (cfg.method == Method::sassnet) {
    DiscriminatorConfig dc;
    dc.weight_seed = cfg.weight_seed;
    disc = std::make_shared<Discriminator>(dc);
  }
}

LossReport step_supervised(const Batch& batch, TrainState& st, const ScheduleState& s) {
  UNet& model = *st.student;
  const UNet::Output out = model.forward(batch.labeled_images, true, st.dropout_rng);

  LossReport r;
  r.step = static_cast<int>(s.t);
  std::vector<Tensor> glogits;
  for (const Tensor& logits : out.seg_logits) {
    const Tensor probs = softmax2(logits);
    Tensor gprobs(probs.n(), 2, probs.d(), probs.h(), probs.w());
    const SupervisedTerm t = supervised_seg_term(probs, batch.labeled_gt, probs.n(), gprobs);
    r.supervised += t.dice + t.ce;
    r.sup_dice += t.dice;
    r.sup_ce += t.ce;
    glogits.push_back(softmax2_backward(probs, gprobs));
  }
  r.total = r.supervised;
  check_finite(r);

  model.zero_grad();
  model.backward(glogits, Tensor());
  st.opt.step(model.params());
  return r;
}

namespace {

// Shared by MT and UA-MT; `use_uncertainty_mask` switches the UA-MT variant.
LossReport step_teacher_student(const Batch& batch, TrainState& st, const ScheduleState& s,
                                bool use_uncertainty_mask) {
  const TrainConfig& cfg = st.cfg;
  UNet& student = *st.student;
  UNet& teacher = *st.teacher;
  const int L = batch.labeled_images.n();
  const int U = batch.unlabeled_images.n();
  if (U == 0) throw std::runtime_error("mean-teacher step: missing unlabeled patches");

  // Student sees clean labeled patches plus independently perturbed
  // unlabeled patches in one batch.
  const Tensor student_unlabeled = add_clipped_noise(batch.unlabeled_images, cfg.noise_std, st.noise_rng);
  const Tensor input = concat_batch(batch.labeled_images, student_unlabeled);
  const UNet::Output out = student.forward(input, true, st.dropout_rng);
  const Tensor probs = softmax2(out.seg_logits[0]);

  LossReport r;
  r.step = static_cast<int>(s.t);
  Tensor gprobs(probs.n(), 2, probs.d(), probs.h(), probs.w());
  const SupervisedTerm sup = supervised_seg_term(probs, batch.labeled_gt, L, gprobs);
  r.supervised = sup.dice + sup.ce;
  r.sup_dice = sup.dice;
  r.sup_ce = sup.ce;
  r.lambda_c = gaussian_rampup(s);

  // Teacher consistency target on its own perturbation of the same patches.
  const Tensor teacher_in = add_clipped_noise(batch.unlabeled_images, cfg.noise_std, st.noise_rng);
  const UNet::Output tout = teacher.forward(teacher_in, true, st.teacher_dropout_rng);
  const Tensor tprobs = softmax2(tout.seg_logits[0]);

  std::vector<double> teacher_fg, student_fg;
  flatten_fg(tprobs, 0, U, teacher_fg);
  flatten_fg(probs, L, L + U, student_fg);

  std::vector<double> gs;
  if (use_uncertainty_mask) {
    std::vector<ProbVolume> passes;
    passes.reserve(static_cast<std::size_t>(cfg.mc_passes));
    for (int p = 0; p < cfg.mc_passes; ++p) {
      const Tensor pass_in = add_clipped_noise(batch.unlabeled_images, cfg.noise_std, st.noise_rng);
      const UNet::Output po = teacher.forward(pass_in, true, st.teacher_dropout_rng);
      passes.push_back(flatten_prob_volume(softmax2(po.seg_logits[0]), 0, U));
    }
    const UncertaintyVolume u = uncertainty_map(passes);
    r.tau = uncertainty_threshold(s);
    const ProbVolume t_pv = ProbVolume::from_foreground(u.shape, teacher_fg);
    const ProbVolume s_pv = ProbVolume::from_foreground(u.shape, student_fg);
    r.consistency = masked_consistency_loss_grad(t_pv, s_pv, u, r.tau, gs);
  } else {
    r.consistency = consistency_dice_loss_grad(teacher_fg, student_fg, {}, nullptr, &gs);
  }
  scatter_grad(gprobs, 1, L, gs, r.lambda_c);

  r.total = r.supervised + r.lambda_c * r.consistency;
  check_finite(r);

  student.zero_grad();
  student.backward({softmax2_backward(probs, gprobs)}, Tensor());
  st.opt.step(student.params());
  ema_teacher_update(teacher, student, cfg.ema_decay);
  return r;
}

}  // namespace

LossReport step_mt(const Batch& batch, TrainState& st, const ScheduleState& s) {
  return step_teacher_student(batch, st, s, false);
}

LossReport step_uamt(const Batch& batch, TrainState& st, const ScheduleState& s) {
  if (st.cfg.mc_passes < 1) throw std::runtime_error("step_uamt: mc_passes must be >= 1");
  return step_teacher_student(batch, st, s, true);
}

LossReport step_sassnet(const Batch& batch, TrainState& st, const ScheduleState& s) {
  const TrainConfig& cfg = st.cfg;
  UNet& model = *st.student;
  Discriminator& disc = *st.disc;
  const int L = batch.labeled_images.n();
  const int U = batch.unlabeled_images.n();
  if (U == 0) throw std::runtime_error("step_sassnet: missing unlabeled patches");

  const Tensor input = concat_batch(batch.labeled_images, batch.unlabeled_images);
  const UNet::Output out = model.forward(input, true, st.dropout_rng);
  if (out.sdm.size() == 0) throw std::runtime_error("step_sassnet: model lacks an SDM head");
  const Tensor probs = softmax2(out.seg_logits[0]);

  LossReport r;
  r.step = static_cast<int>(s.t);
  r.lambda_c = gaussian_rampup(s);
  Tensor gprobs(probs.n(), 2, probs.d(), probs.h(), probs.w());
  Tensor gsdm(out.sdm.n(), 1, out.sdm.d(), out.sdm.h(), out.sdm.w());

  const SupervisedTerm sup = supervised_seg_term(probs, batch.labeled_gt, L, gprobs);
  r.supervised = sup.dice + sup.ce;
  r.sup_dice = sup.dice;
  r.sup_ce = sup.ce;
  if (cfg.alpha != 0) {
    const SdmTarget target = sdm_targets(batch.labeled_gt, cfg.patch_size);
    r.sdm = sdm_mse_term(out.sdm, target, L, gsdm, cfg.alpha);
  }

  // Split the predicted SDM by origin for the adversarial game.
  Tensor sdm_labeled(L, 1, out.sdm.d(), out.sdm.h(), out.sdm.w());
  Tensor sdm_unlabeled(U, 1, out.sdm.d(), out.sdm.h(), out.sdm.w());
  std::copy(out.sdm.v.begin(), out.sdm.v.begin() + sdm_labeled.size(), sdm_labeled.v.begin());
  std::copy(out.sdm.v.begin() + sdm_labeled.size(), out.sdm.v.end(), sdm_unlabeled.v.begin());
  const Tensor pair_labeled = concat_channels(batch.labeled_images, sdm_labeled);
  const Tensor pair_unlabeled = concat_channels(batch.unlabeled_images, sdm_unlabeled);

  // Discriminator ascent: labeled-origin pairs vs unlabeled-origin pairs.
  {
    disc.zero_grad();
    const std::vector<double> logits = disc.forward(concat_batch(pair_labeled, pair_unlabeled));
    std::vector<double> targets(logits.size(), 0.0);
    for (int i = 0; i < L; ++i) targets[i] = 1.0;
    std::vector<double> glog;
    r.disc = bce_logits_loss_grad(logits, targets, glog);
    disc.backward(glog);
    st.disc_opt.step(disc.params());
  }

  // Generator descent: make unlabeled pairs look labeled-origin.
  {
    disc.zero_grad();
    const std::vector<double> logits = disc.forward(pair_unlabeled);
    const std::vector<double> targets(logits.size(), 1.0);
    std::vector<double> glog;
    r.adversarial = bce_logits_loss_grad(logits, targets, glog);
    const Tensor gin = disc.backward(glog);
    Tensor gimg, gsdm_u;
    split_channels(gin, 1, gimg, gsdm_u);
    for (int n = 0; n < U; ++n) {
      float* dst = gsdm.plane(L + n, 0);
      const float* src = gsdm_u.plane(n, 0);
      for (std::size_t i = 0; i < gsdm.spatial(); ++i)
        dst[i] += static_cast<float>(r.lambda_c) * src[i];
    }
  }

  r.total = r.supervised + cfg.alpha * r.sdm + r.lambda_c * r.adversarial;
  check_finite(r);

  model.zero_grad();
  model.backward({softmax2_backward(probs, gprobs)}, gsdm);
  st.opt.step(model.params());
  return r;
}

LossReport step_dtc(const Batch& batch, TrainState& st, const ScheduleState& s) {
  const TrainConfig& cfg = st.cfg;
  UNet& model = *st.student;
  const int L = batch.labeled_images.n();
  const int U = batch.unlabeled_images.n();

  const Tensor input = concat_batch(batch.labeled_images, batch.unlabeled_images);
  const UNet::Output out = model.forward(input, true, st.dropout_rng);
  if (out.sdm.size() == 0) throw std::runtime_error("step_dtc: model lacks an SDM head");
  const Tensor probs = softmax2(out.seg_logits[0]);

  LossReport r;
  r.step = static_cast<int>(s.t);
  r.lambda_c = gaussian_rampup(s);
  Tensor gprobs(probs.n(), 2, probs.d(), probs.h(), probs.w());
  Tensor gsdm(out.sdm.n(), 1, out.sdm.d(), out.sdm.h(), out.sdm.w());

  const SupervisedTerm sup = supervised_seg_term(probs, batch.labeled_gt, L, gprobs);
  r.supervised = sup.dice + sup.ce;
  r.sup_dice = sup.dice;
  r.sup_ce = sup.ce;
  if (cfg.alpha != 0) {
    const SdmTarget target = sdm_targets(batch.labeled_gt, cfg.patch_size);
    r.sdm = sdm_mse_term(out.sdm, target, L, gsdm, cfg.alpha);
  }

  // Task consistency between the transformed SDM and the softmax output,
  // on labeled and unlabeled patches alike.
  SDMVolume z;
  z.shape = {static_cast<int>(out.sdm.spatial()), L + U, 1};
  z.data.resize(out.sdm.size());
  for (std::size_t i = 0; i < out.sdm.size(); ++i) z.data[i] = out.sdm.v[i];
  std::vector<double> dT_dz;
  const ProbVolume mapped = sdm_to_seg_with_grad(z, cfg.k, dT_dz);

  std::vector<double> seg_fg;
  flatten_fg(probs, 0, L + U, seg_fg);
  std::vector<double> g_mapped, g_seg;
  r.consistency = consistency_dice_loss_grad(mapped.fg, seg_fg, {}, &g_mapped, &g_seg);
  scatter_grad(gprobs, 1, 0, g_seg, r.lambda_c);
  for (std::size_t i = 0; i < out.sdm.size(); ++i)
    gsdm.v[i] += static_cast<float>(r.lambda_c * g_mapped[i] * dT_dz[i]);

  r.total = r.supervised + cfg.alpha * r.sdm + r.lambda_c * r.consistency;
  check_finite(r);

  model.zero_grad();
  model.backward({softmax2_backward(probs, gprobs)}, gsdm);
  st.opt.step(model.params());
  return r;
}

LossReport step_mcnet(const Batch& batch, TrainState& st, const ScheduleState& s) {
  const TrainConfig& cfg = st.cfg;
  UNet& model = *st.student;
  if (model.config().decoders != 2) throw std::runtime_error("step_mcnet: model needs 2 decoders");
  const int L = batch.labeled_images.n();
  const int U = batch.unlabeled_images.n();

  const Tensor input = concat_batch(batch.labeled_images, batch.unlabeled_images);
  const UNet::Output out = model.forward(input, true, st.dropout_rng);
  const Tensor probs_a = softmax2(out.seg_logits[0]);
  const Tensor probs_b = softmax2(out.seg_logits[1]);

  LossReport r;
  r.step = static_cast<int>(s.t);
  r.lambda_c = gaussian_rampup(s);
  Tensor gprobs_a(probs_a.n(), 2, probs_a.d(), probs_a.h(), probs_a.w());
  Tensor gprobs_b(probs_b.n(), 2, probs_b.d(), probs_b.h(), probs_b.w());

  const SupervisedTerm sup_a = supervised_seg_term(probs_a, batch.labeled_gt, L, gprobs_a);
  const SupervisedTerm sup_b = supervised_seg_term(probs_b, batch.labeled_gt, L, gprobs_b);
  r.supervised = sup_a.dice + sup_a.ce + sup_b.dice + sup_b.ce;
  r.sup_dice = sup_a.dice + sup_b.dice;
  r.sup_ce = sup_a.ce + sup_b.ce;

  // Sharpened soft labels cross-supervise the other decoder; the sharpened
  // side is a constant target (no gradient flows through it).
  std::vector<double> fg_a, fg_b;
  flatten_fg(probs_a, 0, L + U, fg_a);
  flatten_fg(probs_b, 0, L + U, fg_b);
  const std::array<int, 3> flat_shape{static_cast<int>(fg_a.size()), 1, 1};
  const ProbVolume sharp_a = sharpen(ProbVolume::from_foreground(flat_shape, fg_a), cfg.sharpen_temperature);
  const ProbVolume sharp_b = sharpen(ProbVolume::from_foreground(flat_shape, fg_b), cfg.sharpen_temperature);

  std::vector<double> g_b, g_a;
  const double cross_ab = consistency_dice_loss_grad(sharp_a.fg, fg_b, {}, nullptr, &g_b);
  const double cross_ba = consistency_dice_loss_grad(sharp_b.fg, fg_a, {}, nullptr, &g_a);
  r.consistency = cross_ab + cross_ba;
  scatter_grad(gprobs_b, 1, 0, g_b, r.lambda_c);
  scatter_grad(gprobs_a, 1, 0, g_a, r.lambda_c);

  r.total = r.supervised + r.lambda_c * r.consistency;
  check_finite(r);

  model.zero_grad();
  model.backward({softmax2_backward(probs_a, gprobs_a), softmax2_backward(probs_b, gprobs_b)},
                 Tensor());
  st.opt.step(model.params());
  return r;
}

// ---- training loop ----

TrainResult train(const TrainConfig& cfg, const TrainingSet& data, const std::string& run_dir) {
  if (data.labeled.empty()) throw std::runtime_error("train: empty labeled set");
  for (const int idx : data.labeled) {
    for (int a = 0; a < 3; ++a)
      if (cfg.patch_size[a] > data.images[idx].shape[a])
        throw std::runtime_error("train: patch larger than volume");
  }
  for (const int idx : data.unlabeled)
    for (int a = 0; a < 3; ++a)
      if (cfg.patch_size[a] > data.images[idx].shape[a])
        throw std::runtime_error("train: patch larger than volume");

  TrainState st(cfg);
  PatchSampler sampler(data, cfg);

  TrainResult result;
  result.history.reserve(static_cast<std::size_t>(cfg.t_max));
  for (int t = 0; t < cfg.t_max; ++t) {
    const ScheduleState s{t, cfg.t_max, cfg.lambda_c_final};
    const Batch batch = sampler.next();
    LossReport r;
    switch (cfg.method) {
      case Method::supervised: r = step_supervised(batch, st, s); break;
      case Method::mt: r = step_mt(batch, st, s); break;
      case Method::uamt: r = step_uamt(batch, st, s); break;
      case Method::sassnet: r = step_sassnet(batch, st, s); break;
      case Method::dtc: r = step_dtc(batch, st, s); break;
      case Method::mcnet: r = step_mcnet(batch, st, s); break;
    }
    result.history.push_back(r);
  }
  result.model = st.student;
  result.teacher = st.teacher;

  if (!run_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(run_dir) / "checkpoints");
    std::ofstream cf(fs::path(run_dir) / "config.json");
    cf << cfg.to_json() << "\n";
    write_history_csv((fs::path(run_dir) / "history.csv").string(), result.history);
    save_checkpoint((fs::path(run_dir) / "checkpoints" / "final.ckpt").string(), cfg,
                    *result.model);
  }
  return result;
}

// ---- inference ----

namespace {

std::vector<int> window_starts(int extent, int patch, int stride) {
  std::vector<int> starts;
  for (int s = 0;; s += stride) {
    if (s + patch >= extent) {
      starts.push_back(extent - patch);
      break;
    }
    starts.push_back(s);
  }
  return starts;
}

}  // namespace

ProbVolume predict_prob(UNet& model, const Volume3D& volume, const std::array<int, 3>& patch) {
  for (int a = 0; a < 3; ++a)
    if (patch[a] > volume.shape[a])
      throw std::runtime_error("predict_prob: patch larger than volume");

  const Volume3D norm = normalize_minmax(volume);
  std::vector<double> acc(norm.size(), 0.0);
  std::vector<double> weight(norm.size(), 0.0);
  Rng eval_rng(0);  // dropout is off in eval mode; never consumed

  const auto xs = window_starts(volume.shape[0], patch[0], std::max(1, patch[0] / 2));
  const auto ys = window_starts(volume.shape[1], patch[1], std::max(1, patch[1] / 2));
  const auto zs = window_starts(volume.shape[2], patch[2], std::max(1, patch[2] / 2));

  Tensor in(1, 1, patch[2], patch[1], patch[0]);
  for (const int z0 : zs)
    for (const int y0 : ys)
      for (const int x0 : xs) {
        copy_image_patch(norm, {x0, y0, z0}, patch, in.plane(0, 0));
        const UNet::Output out = model.forward(in, false, eval_rng);
        std::vector<float> fg(in.spatial(), 0.0f);
        for (const Tensor& logits : out.seg_logits) {
          const Tensor probs = softmax2(logits);
          const float* p = probs.plane(0, 1);
          for (std::size_t i = 0; i < fg.size(); ++i) fg[i] += p[i];
        }
        const float inv = 1.0f / static_cast<float>(out.seg_logits.size());
        std::size_t i = 0;
        for (int z = 0; z < patch[2]; ++z)
          for (int y = 0; y < patch[1]; ++y)
            for (int x = 0; x < patch[0]; ++x, ++i) {
              const std::size_t v = volume.index(x0 + x, y0 + y, z0 + z);
              acc[v] += fg[i] * inv;
              weight[v] += 1.0;
            }
      }

  ProbVolume pv;
  pv.shape = volume.shape;
  pv.fg.resize(norm.size());
  pv.bg.resize(norm.size());
  for (std::size_t i = 0; i < norm.size(); ++i) {
    pv.fg[i] = acc[i] / weight[i];
    pv.bg[i] = 1.0 - pv.fg[i];
  }
  return pv;
}

LabelVolume predict_label(UNet& model, const Volume3D& volume, const std::array<int, 3>& patch,
                          double threshold) {
  const ProbVolume pv = predict_prob(model, volume, patch);
  LabelVolume out(volume.shape, volume.spacing);
  for (std::size_t i = 0; i < pv.fg.size(); ++i) out.data[i] = pv.fg[i] >= threshold ? 1 : 0;
  return out;
}

// ---- checkpoints ----

void save_checkpoint(const std::string& path, const TrainConfig& cfg, UNet& model) {
  auto params = model.params();
  json manifest;
  manifest["config"] = json::parse(cfg.to_json());
  json plist = json::array();
  for (const Param& p : params) plist.push_back({{"name", p.name}, {"size", p.value->size()}});
  manifest["params"] = plist;
  const std::string header = manifest.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write file: " + path);
  f.write("VBCK1\n", 6);
  const std::uint64_t len = header.size();
  f.write(reinterpret_cast<const char*>(&len), 8);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const Param& p : params)
    f.write(reinterpret_cast<const char*>(p.value->data()),
            static_cast<std::streamsize>(p.value->size() * sizeof(float)));
  if (!f) throw std::runtime_error("cannot write file: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  char magic[6];
  f.read(magic, 6);
  if (!f || std::memcmp(magic, "VBCK1\n", 6) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  std::uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 8);
  std::string header(len, '\0');
  f.read(header.data(), static_cast<std::streamsize>(len));
  if (!f) throw std::runtime_error("truncated checkpoint: " + path);

  json manifest = json::parse(header);
  Checkpoint ck;
  ck.cfg = TrainConfig::from_json_text(manifest["config"].dump());
  ck.model = std::make_shared<UNet>(backbone_config(ck.cfg));

  auto params = ck.model->params();
  const auto& plist = manifest["params"];
  if (plist.size() != params.size())
    throw std::runtime_error("checkpoint parameter count mismatch: " + path);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = plist[i]["name"].get<std::string>();
    const std::size_t size = plist[i]["size"].get<std::size_t>();
    if (name != params[i].name || size != params[i].value->size())
      throw std::runtime_error("checkpoint parameter mismatch at '" + name + "': " + path);
    f.read(reinterpret_cast<char*>(params[i].value->data()),
           static_cast<std::streamsize>(size * sizeof(float)));
  }
  if (!f) throw std::runtime_error("truncated checkpoint payload: " + path);
  return ck;
}

void write_history_csv(const std::string& path, const std::vector<LossReport>& history) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write file: " + path);
  f << "step,total,supervised,sup_dice,sup_ce,consistency,sdm,adversarial,disc,lambda_c,tau\n";
  for (const LossReport& r : history)
    f << r.step << ',' << r.total << ',' << r.supervised << ',' << r.sup_dice << ',' << r.sup_ce
      << ',' << r.consistency << ',' << r.sdm << ',' << r.adversarial << ',' << r.disc << ','
      << r.lambda_c << ',' << r.tau << "\n";
}

}  // namespace vb
