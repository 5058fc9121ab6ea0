#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "vesselbench/tensor.hpp"

namespace vb {

struct UNetConfig {
  int in_channels = 1;
  int base_width = 8;   // feature count at the first level, doubled per level
  int depth = 3;        // encoder levels (including the bottleneck)
  double dropout_rate = 0.0;  // applied at the bottleneck, MC-dropout ready
  bool sdm_head = false;      // extra tanh-squashed distance-map head
  int decoders = 1;           // 2 = shared encoder, two distinct decoders
  std::uint64_t weight_seed = 0;
};

/// Encoder-decoder with skip connections, two convolutions per level and
/// channel doubling. Decoder 0 upsamples trilinearly; decoder 1 (when
/// present) uses transposed convolutions, which is what makes the two
/// decoders architecturally distinct.
class UNet {
 public:
  struct Output {
    std::vector<Tensor> seg_logits;  // one [N,2,D,H,W] tensor per decoder
    Tensor sdm;                      // [N,1,D,H,W], empty when absent
  };

  explicit UNet(const UNetConfig& cfg);

  /// `train` enables dropout; rng drives the dropout mask.
  Output forward(const Tensor& x, bool train, Rng& rng);

  /// Propagates head gradients and accumulates parameter gradients. Pass an
  /// empty tensor to skip a head. Must follow the matching forward().
  void backward(const std::vector<Tensor>& gseg_logits, const Tensor& gsdm);

  std::vector<Param> params();
  void zero_grad();
  const UNetConfig& config() const { return cfg_; }

 private:
  struct ConvBlock {
    Conv3d c1, c2;
    InstanceNorm3d n1, n2;
    ReLU r1, r2;
    ConvBlock() = default;
    ConvBlock(int in_ch, int out_ch, Rng& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gy);
    void collect_params(const std::string& prefix, std::vector<Param>& out);
  };

  struct DecoderLevel {
    bool use_deconv = false;
    UpsampleTrilinear2x up;
    ConvTranspose3d deconv;
    ConvBlock block;
    int skip_channels = 0;
  };

  struct Decoder {
    std::vector<DecoderLevel> levels;  // from deepest to shallowest
    Conv3d seg_head;
    std::vector<Tensor> skips_cache;
  };

  Tensor run_decoder(int idx, const Tensor& bottom, const std::vector<Tensor>& skips);
  Tensor backprop_decoder(int idx, const Tensor& gout, std::vector<Tensor>& gskips);

  UNetConfig cfg_;
  std::vector<ConvBlock> enc_blocks_;
  std::vector<MaxPool3d> pools_;
  Dropout bottleneck_dropout_;
  std::vector<Decoder> decoders_;
  Conv3d sdm_head_;
  Tanh sdm_tanh_;
  bool has_sdm_ = false;
};

struct DiscriminatorConfig {
  std::vector<int> conv_widths{16, 32, 64, 64};
  int in_channels = 2;  // image + signed distance map
  std::uint64_t weight_seed = 0;
};

/// Strided-convolution classifier scoring (image, SDM) pairs with one logit
/// per batch item.
class Discriminator {
 public:
  explicit Discriminator(const DiscriminatorConfig& cfg);

  std::vector<double> forward(const Tensor& x);
  /// Gradient wrt the input pair given dL/dlogit per item.
  Tensor backward(const std::vector<double>& glogits);

  std::vector<Param> params();
  void zero_grad();

 private:
  DiscriminatorConfig cfg_;
  std::vector<Conv3d> convs_;
  std::vector<ReLU> acts_;
  std::vector<float> fc_w_, fc_b_, gfc_w_, gfc_b_;
  Tensor features_;  // last conv output, cached for the head backward
};

}  // namespace vb
