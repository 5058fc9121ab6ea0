#include "vesselbench/unet.hpp"

#include <stdexcept>

namespace vb {

UNet::ConvBlock::ConvBlock(int in_ch, int out_ch, Rng& rng)
    : c1(in_ch, out_ch, 3, 1, rng),
      c2(out_ch, out_ch, 3, 1, rng),
      n1(out_ch),
      n2(out_ch) {}

Tensor UNet::ConvBlock::forward(const Tensor& x) {
  return r2.forward(n2.forward(c2.forward(r1.forward(n1.forward(c1.forward(x))))));
}

Tensor UNet::ConvBlock::backward(const Tensor& gy) {
  return c1.backward(n1.backward(r1.backward(c2.backward(n2.backward(r2.backward(gy))))));
}

void UNet::ConvBlock::collect_params(const std::string& prefix, std::vector<Param>& out) {
  c1.collect_params(prefix + ".conv1", out);
  n1.collect_params(prefix + ".norm1", out);
  c2.collect_params(prefix + ".conv2", out);
  n2.collect_params(prefix + ".norm2", out);
}

UNet::UNet(const UNetConfig& cfg) : cfg_(cfg), bottleneck_dropout_(cfg.dropout_rate) {
  if (cfg.depth < 2) throw std::runtime_error("UNet: depth must be >= 2");
  if (cfg.decoders < 1 || cfg.decoders > 2) throw std::runtime_error("UNet: decoders must be 1 or 2");
  Rng rng(derive_seed(cfg.weight_seed, "unet-init"));

  int ch = cfg.in_channels;
  for (int l = 0; l < cfg.depth; ++l) {
    const int width = cfg.base_width << l;
    enc_blocks_.emplace_back(ch, width, rng);
    ch = width;
  }
  pools_.resize(cfg.depth - 1);

  has_sdm_ = cfg.sdm_head;
  decoders_.resize(cfg.decoders);
  for (int d = 0; d < cfg.decoders; ++d) {
    Decoder& dec = decoders_[d];
    const bool use_deconv = d == 1;
    for (int l = cfg.depth - 2; l >= 0; --l) {
      const int deep_ch = cfg.base_width << (l + 1);
      const int skip_ch = cfg.base_width << l;
      DecoderLevel level;
      level.use_deconv = use_deconv;
      level.skip_channels = skip_ch;
      if (use_deconv) {
        level.deconv = ConvTranspose3d(deep_ch, skip_ch, rng);
        level.block = ConvBlock(2 * skip_ch, skip_ch, rng);
      } else {
        level.block = ConvBlock(deep_ch + skip_ch, skip_ch, rng);
      }
      dec.levels.push_back(std::move(level));
    }
    dec.seg_head = Conv3d(cfg.base_width, 2, 1, 1, rng);
  }
  if (has_sdm_) sdm_head_ = Conv3d(cfg.base_width, 1, 1, 1, rng);
}

Tensor UNet::run_decoder(int idx, const Tensor& bottom, const std::vector<Tensor>& skips) {
  Decoder& dec = decoders_[idx];
  Tensor cur = bottom;
  for (std::size_t i = 0; i < dec.levels.size(); ++i) {
    DecoderLevel& level = dec.levels[i];
    const Tensor& skip = skips[skips.size() - 1 - i];
    Tensor up = level.use_deconv ? level.deconv.forward(cur) : level.up.forward(cur);
    cur = level.block.forward(concat_channels(up, skip));
  }
  return cur;
}

Tensor UNet::backprop_decoder(int idx, const Tensor& gout, std::vector<Tensor>& gskips) {
  Decoder& dec = decoders_[idx];
  Tensor g = gout;
  for (std::size_t i = dec.levels.size(); i-- > 0;) {
    DecoderLevel& level = dec.levels[i];
    const Tensor gcat = level.block.backward(g);
    Tensor gup, gskip;
    const int up_channels = gcat.c() - level.skip_channels;
    split_channels(gcat, up_channels, gup, gskip);
    Tensor& acc = gskips[gskips.size() - 1 - i];
    if (acc.size() == 0) {
      acc = gskip;
    } else {
      for (std::size_t j = 0; j < acc.size(); ++j) acc.v[j] += gskip.v[j];
    }
    g = level.use_deconv ? level.deconv.backward(gup) : level.up.backward(gup);
  }
  return g;
}

UNet::Output UNet::forward(const Tensor& x, bool train, Rng& rng) {
  const int div = 1 << (cfg_.depth - 1);
  if (x.d() % div || x.h() % div || x.w() % div)
    throw std::runtime_error("UNet: patch sides must be divisible by 2^(depth-1)");
  if (x.c() != cfg_.in_channels) throw std::runtime_error("UNet: channel mismatch");

  std::vector<Tensor> skips;
  Tensor cur = x;
  for (int l = 0; l < cfg_.depth; ++l) {
    cur = enc_blocks_[l].forward(cur);
    if (l + 1 < cfg_.depth) {
      skips.push_back(cur);
      cur = pools_[l].forward(cur);
    }
  }
  cur = bottleneck_dropout_.forward(cur, train, rng);

  Output out;
  for (int d = 0; d < cfg_.decoders; ++d) {
    Decoder& dec = decoders_[d];
    dec.skips_cache = skips;  // shared activations, reused per decoder
    Tensor feat = run_decoder(d, cur, skips);
    out.seg_logits.push_back(dec.seg_head.forward(feat));
    if (d == 0 && has_sdm_) {
      // Both heads read the same decoder-0 feature map; rerunning the 1x1
      // convs on the cached feature keeps each layer single-use per pass.
      out.sdm = sdm_tanh_.forward(sdm_head_.forward(feat));
    }
  }
  return out;
}

void UNet::backward(const std::vector<Tensor>& gseg_logits, const Tensor& gsdm) {
  std::vector<Tensor> gskips(cfg_.depth - 1);
  Tensor gbottom;

  for (int d = cfg_.decoders - 1; d >= 0; --d) {
    Tensor gfeat;
    if (d < static_cast<int>(gseg_logits.size()) && gseg_logits[d].size() > 0)
      gfeat = decoders_[d].seg_head.backward(gseg_logits[d]);
    if (d == 0 && has_sdm_ && gsdm.size() > 0) {
      const Tensor gs = sdm_head_.backward(sdm_tanh_.backward(gsdm));
      if (gfeat.size() == 0)
        gfeat = gs;
      else
        for (std::size_t j = 0; j < gfeat.size(); ++j) gfeat.v[j] += gs.v[j];
    }
    if (gfeat.size() == 0) continue;
    const Tensor gb = backprop_decoder(d, gfeat, gskips);
    if (gbottom.size() == 0)
      gbottom = gb;
    else
      for (std::size_t j = 0; j < gbottom.size(); ++j) gbottom.v[j] += gb.v[j];
  }
  if (gbottom.size() == 0) throw std::runtime_error("UNet::backward: no head gradients given");

  Tensor g = bottleneck_dropout_.backward(gbottom);
  for (int l = cfg_.depth - 1; l >= 0; --l) {
    if (l + 1 < cfg_.depth) {
      g = pools_[l].backward(g);
      for (std::size_t j = 0; j < g.size(); ++j) g.v[j] += gskips[l].size() ? gskips[l].v[j] : 0.0f;
    }
    g = enc_blocks_[l].backward(g);
  }
}

std::vector<Param> UNet::params() {
  std::vector<Param> out;
  for (std::size_t l = 0; l < enc_blocks_.size(); ++l)
    enc_blocks_[l].collect_params("enc" + std::to_string(l), out);
  for (std::size_t d = 0; d < decoders_.size(); ++d) {
    for (std::size_t i = 0; i < decoders_[d].levels.size(); ++i) {
      const std::string prefix = "dec" + std::to_string(d) + ".lvl" + std::to_string(i);
      if (decoders_[d].levels[i].use_deconv)
        decoders_[d].levels[i].deconv.collect_params(prefix + ".deconv", out);
      decoders_[d].levels[i].block.collect_params(prefix, out);
    }
    decoders_[d].seg_head.collect_params("dec" + std::to_string(d) + ".seg_head", out);
  }
  if (has_sdm_) sdm_head_.collect_params("sdm_head", out);
  return out;
}

void UNet::zero_grad() {
  for (Param& p : params()) std::fill(p.grad->begin(), p.grad->end(), 0.0f);
}

Discriminator::Discriminator(const DiscriminatorConfig& cfg) : cfg_(cfg) {
  Rng rng(derive_seed(cfg.weight_seed, "disc-init"));
  int ch = cfg.in_channels;
  for (const int width : cfg.conv_widths) {
    convs_.emplace_back(ch, width, 3, 2, rng);
    acts_.emplace_back(0.2f);
    ch = width;
  }
  fc_w_.resize(ch);
  const double std_dev = std::sqrt(2.0 / static_cast<double>(ch));
  for (auto& v : fc_w_) v = static_cast<float>(rng.normal(0.0, std_dev));
  fc_b_.assign(1, 0.0f);
  gfc_w_.assign(ch, 0.0f);
  gfc_b_.assign(1, 0.0f);
}

std::vector<double> Discriminator::forward(const Tensor& x) {
  Tensor cur = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) cur = acts_[i].forward(convs_[i].forward(cur));
  features_ = cur;

  std::vector<double> logits(cur.n());
  const double inv_m = 1.0 / static_cast<double>(cur.spatial());
  for (int n = 0; n < cur.n(); ++n) {
    double acc = fc_b_[0];
    for (int c = 0; c < cur.c(); ++c) {
      const float* p = cur.plane(n, c);
      double mean = 0;
      for (std::size_t i = 0; i < cur.spatial(); ++i) mean += p[i];
      acc += fc_w_[c] * mean * inv_m;
    }
    logits[n] = acc;
  }
  return logits;
}

Tensor Discriminator::backward(const std::vector<double>& glogits) {
  const Tensor& f = features_;
  Tensor gfeat(f.n(), f.c(), f.d(), f.h(), f.w());
  const double inv_m = 1.0 / static_cast<double>(f.spatial());
  for (int n = 0; n < f.n(); ++n) {
    gfc_b_[0] += static_cast<float>(glogits[n]);
    for (int c = 0; c < f.c(); ++c) {
      const float* p = f.plane(n, c);
      double mean = 0;
      for (std::size_t i = 0; i < f.spatial(); ++i) mean += p[i];
      gfc_w_[c] += static_cast<float>(glogits[n] * mean * inv_m);
      const float gv = static_cast<float>(glogits[n] * fc_w_[c] * inv_m);
      float* gp = gfeat.plane(n, c);
      for (std::size_t i = 0; i < f.spatial(); ++i) gp[i] = gv;
    }
  }
  Tensor g = gfeat;
  for (std::size_t i = convs_.size(); i-- > 0;) g = convs_[i].backward(acts_[i].backward(g));
  return g;
}

std::vector<Param> Discriminator::params() {
  std::vector<Param> out;
  for (std::size_t i = 0; i < convs_.size(); ++i)
    convs_[i].collect_params("disc.conv" + std::to_string(i), out);
  out.push_back({"disc.fc.w", &fc_w_, &gfc_w_});
  out.push_back({"disc.fc.b", &fc_b_, &gfc_b_});
  return out;
}

void Discriminator::zero_grad() {
  for (Param& p : params()) std::fill(p.grad->begin(), p.grad->end(), 0.0f);
}

}  // namespace vb
