#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vesselbench/rng.hpp"

namespace vb {

/// Dense float tensor in N,C,D,H,W order (x fastest).
struct Tensor {
  std::array<int, 5> shape{0, 0, 0, 0, 0};
  std::vector<float> v;

  Tensor() = default;
  Tensor(int n, int c, int d, int h, int w)
      : shape{n, c, d, h, w},
        v(static_cast<std::size_t>(n) * c * d * h * w, 0.0f) {}

  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int d() const { return shape[2]; }
  int h() const { return shape[3]; }
  int w() const { return shape[4]; }
  std::size_t spatial() const { return static_cast<std::size_t>(d()) * h() * w(); }
  std::size_t size() const { return v.size(); }
  float* data() { return v.data(); }
  const float* data() const { return v.data(); }
  float* plane(int n_, int c_) {
    return v.data() + (static_cast<std::size_t>(n_) * c() + c_) * spatial();
  }
  const float* plane(int n_, int c_) const {
    return v.data() + (static_cast<std::size_t>(n_) * c() + c_) * spatial();
  }
  void zero() { std::fill(v.begin(), v.end(), 0.0f); }
};

/// Runs fn(0..count-1) across a small thread pool. Each index must write to
/// disjoint memory; per-index work is done serially, so results are
/// bit-identical for any thread count (VB_THREADS overrides the default).
void parallel_for(int count, const std::function<void(int)>& fn);

/// Named view of one parameter array and its gradient.
struct Param {
  std::string name;
  std::vector<float>* value = nullptr;
  std::vector<float>* grad = nullptr;
};

// ---------------------------------------------------------------------------
// Layers. Each caches what its backward needs; a layer instance supports one
// forward/backward pair in flight at a time.
// ---------------------------------------------------------------------------

class Conv3d {
 public:
  Conv3d() = default;
  /// kernel must be odd (1 or 3); pad = kernel/2.
  Conv3d(int in_ch, int out_ch, int kernel, int stride, Rng& init_rng);

  Tensor forward(const Tensor& x);
  /// Accumulates weight/bias grads, returns grad wrt input.
  Tensor backward(const Tensor& gy);
  void collect_params(const std::string& prefix, std::vector<Param>& out);

  int in_ch() const { return in_ch_; }
  int out_ch() const { return out_ch_; }

 private:
  int in_ch_ = 0, out_ch_ = 0, k_ = 3, stride_ = 1;
  std::vector<float> w_, b_, gw_, gb_;
  Tensor x_pad_;
  std::array<int, 5> in_shape_{};
};

/// Transposed convolution, kernel 2, stride 2 (each output voxel has exactly
/// one source voxel).
class ConvTranspose3d {
 public:
  ConvTranspose3d() = default;
  ConvTranspose3d(int in_ch, int out_ch, Rng& init_rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);
  void collect_params(const std::string& prefix, std::vector<Param>& out);

 private:
  int in_ch_ = 0, out_ch_ = 0;
  std::vector<float> w_, b_, gw_, gb_;
  Tensor x_;
};

class InstanceNorm3d {
 public:
  InstanceNorm3d() = default;
  explicit InstanceNorm3d(int channels);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy);
  void collect_params(const std::string& prefix, std::vector<Param>& out);

 private:
  int channels_ = 0;
  std::vector<float> gamma_, beta_, ggamma_, gbeta_;
  Tensor xhat_;
  std::vector<double> inv_std_;  // per (n, c)
};

class ReLU {
 public:
  /// slope 0 = plain ReLU; e.g. 0.2 for the discriminator.
  explicit ReLU(float negative_slope = 0.0f) : slope_(negative_slope) {}
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy) const;

 private:
  float slope_;
  std::vector<std::uint8_t> positive_;
};

class MaxPool3d {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy) const;

 private:
  std::array<int, 5> in_shape_{};
  std::vector<std::int32_t> argmax_;
};

class UpsampleTrilinear2x {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy) const;

 private:
  std::array<int, 5> in_shape_{};
};

class Dropout {
 public:
  explicit Dropout(double rate = 0.0) : rate_(rate) {}
  Tensor forward(const Tensor& x, bool train, Rng& rng);
  Tensor backward(const Tensor& gy) const;
  double rate() const { return rate_; }

 private:
  double rate_;
  std::vector<float> mask_;  // empty means pass-through
};

class Tanh {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& gy) const;

 private:
  Tensor y_;
};

// ---- stateless helpers ----

/// Channel softmax for two-channel logits.
Tensor softmax2(const Tensor& logits);
/// Backward of softmax2 given dL/dprobs.
Tensor softmax2_backward(const Tensor& probs, const Tensor& gprobs);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& g, int c_a, Tensor& ga, Tensor& gb);

}  // namespace vb
