#include "vesselbench/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

namespace vb {

void parallel_for(int count, const std::function<void(int)>& fn) {
  static const int max_threads = [] {
    if (const char* env = std::getenv("VB_THREADS")) {
      const int t = std::atoi(env);
      if (t > 0) return t;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
  }();
  const int nt = std::min(max_threads, count);
  if (nt <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

namespace {

Tensor pad3d(const Tensor& x, int p) {
  if (p == 0) return x;
  Tensor out(x.n(), x.c(), x.d() + 2 * p, x.h() + 2 * p, x.w() + 2 * p);
  const int H = x.h(), W = x.w(), D = x.d();
  const int Hp = H + 2 * p, Wp = W + 2 * p;
  parallel_for(x.n() * x.c(), [&](int nc) {
    const int n = nc / x.c(), c = nc % x.c();
    const float* src = x.plane(n, c);
    float* dst = out.plane(n, c);
    for (int z = 0; z < D; ++z)
      for (int y = 0; y < H; ++y) {
        const float* srow = src + (static_cast<std::size_t>(z) * H + y) * W;
        float* drow = dst + (static_cast<std::size_t>(z + p) * Hp + (y + p)) * Wp + p;
        std::copy(srow, srow + W, drow);
      }
  });
  return out;
}

// Raw correlation of a padded input with weights [co][ci][k^3].
void conv_core(const float* xpad, int N, int Ci, int Dp, int Hp, int Wp, const float* w,
               const float* bias, int Co, int k, int stride, float* out, int Do, int Ho, int Wo) {
  const std::size_t in_plane = static_cast<std::size_t>(Dp) * Hp * Wp;
  const std::size_t out_plane = static_cast<std::size_t>(Do) * Ho * Wo;
  parallel_for(N * Co, [&](int task) {
    const int n = task / Co, co = task % Co;
    float* op = out + (static_cast<std::size_t>(n) * Co + co) * out_plane;
    const float bv = bias ? bias[co] : 0.0f;
    for (std::size_t i = 0; i < out_plane; ++i) op[i] = bv;
    for (int ci = 0; ci < Ci; ++ci) {
      const float* ip = xpad + (static_cast<std::size_t>(n) * Ci + ci) * in_plane;
      for (int kz = 0; kz < k; ++kz)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const float wv = w[(((static_cast<std::size_t>(co) * Ci + ci) * k + kz) * k + ky) * k + kx];
            if (wv == 0.0f) continue;
            for (int zo = 0; zo < Do; ++zo) {
              const int zi = zo * stride + kz;
              for (int yo = 0; yo < Ho; ++yo) {
                const int yi = yo * stride + ky;
                const float* irow = ip + (static_cast<std::size_t>(zi) * Hp + yi) * Wp + kx;
                float* orow = op + (static_cast<std::size_t>(zo) * Ho + yo) * Wo;
                if (stride == 1) {
                  for (int xo = 0; xo < Wo; ++xo) orow[xo] += wv * irow[xo];
                } else {
                  for (int xo = 0; xo < Wo; ++xo) orow[xo] += wv * irow[xo * stride];
                }
              }
            }
          }
    }
  });
}

}  // namespace

Conv3d::Conv3d(int in_ch, int out_ch, int kernel, int stride, Rng& init_rng)
    : in_ch_(in_ch), out_ch_(out_ch), k_(kernel), stride_(stride) {
  if (kernel != 1 && kernel != 3) throw std::runtime_error("Conv3d: kernel must be 1 or 3");
  const std::size_t nw = static_cast<std::size_t>(out_ch) * in_ch * kernel * kernel * kernel;
  w_.resize(nw);
  const double std_dev = std::sqrt(2.0 / (static_cast<double>(in_ch) * kernel * kernel * kernel));
  for (auto& v : w_) v = static_cast<float>(init_rng.normal(0.0, std_dev));
  b_.assign(out_ch, 0.0f);
  gw_.assign(nw, 0.0f);
  gb_.assign(out_ch, 0.0f);
}

Tensor Conv3d::forward(const Tensor& x) {
  if (x.c() != in_ch_) throw std::runtime_error("Conv3d: channel mismatch");
  const int p = k_ / 2;
  in_shape_ = x.shape;
  x_pad_ = pad3d(x, p);
  const int Do = (x.d() + 2 * p - k_) / stride_ + 1;
  const int Ho = (x.h() + 2 * p - k_) / stride_ + 1;
  const int Wo = (x.w() + 2 * p - k_) / stride_ + 1;
  Tensor out(x.n(), out_ch_, Do, Ho, Wo);
  conv_core(x_pad_.data(), x.n(), in_ch_, x_pad_.d(), x_pad_.h(), x_pad_.w(), w_.data(),
            b_.data(), out_ch_, k_, stride_, out.data(), Do, Ho, Wo);
  return out;
}

Tensor Conv3d::backward(const Tensor& gy) {
  const int p = k_ / 2;
  const int N = in_shape_[0], D = in_shape_[2], H = in_shape_[3], W = in_shape_[4];
  const int Do = gy.d(), Ho = gy.h(), Wo = gy.w();
  const int Dp = D + 2 * p, Hp = H + 2 * p, Wp = W + 2 * p;
  const std::size_t in_plane = static_cast<std::size_t>(Dp) * Hp * Wp;

  // Bias grads.
  for (int co = 0; co < out_ch_; ++co) {
    double acc = 0;
    for (int n = 0; n < N; ++n) {
      const float* g = gy.plane(n, co);
      for (std::size_t i = 0; i < gy.spatial(); ++i) acc += g[i];
    }
    gb_[co] += static_cast<float>(acc);
  }

  // Weight grads: dot products of gy rows against shifted input rows.
  parallel_for(out_ch_, [&](int co) {
    for (int ci = 0; ci < in_ch_; ++ci)
      for (int kz = 0; kz < k_; ++kz)
        for (int ky = 0; ky < k_; ++ky)
          for (int kx = 0; kx < k_; ++kx) {
            double acc = 0;
            for (int n = 0; n < N; ++n) {
              const float* ip = x_pad_.data() + (static_cast<std::size_t>(n) * in_ch_ + ci) * in_plane;
              const float* gp = gy.plane(n, co);
              for (int zo = 0; zo < Do; ++zo) {
                const int zi = zo * stride_ + kz;
                for (int yo = 0; yo < Ho; ++yo) {
                  const int yi = yo * stride_ + ky;
                  const float* irow = ip + (static_cast<std::size_t>(zi) * Hp + yi) * Wp + kx;
                  const float* grow = gp + (static_cast<std::size_t>(zo) * Ho + yo) * Wo;
                  float dot = 0;
                  if (stride_ == 1) {
                    for (int xo = 0; xo < Wo; ++xo) dot += grow[xo] * irow[xo];
                  } else {
                    for (int xo = 0; xo < Wo; ++xo) dot += grow[xo] * irow[xo * stride_];
                  }
                  acc += dot;
                }
              }
            }
            gw_[(((static_cast<std::size_t>(co) * in_ch_ + ci) * k_ + kz) * k_ + ky) * k_ + kx] +=
                static_cast<float>(acc);
          }
  });

  // Input grads.
  Tensor gx(N, in_ch_, D, H, W);
  if (stride_ == 1) {
    // Correlation of padded gy with the channel-swapped, flipped kernel.
    std::vector<float> wt(w_.size());
    for (int co = 0; co < out_ch_; ++co)
      for (int ci = 0; ci < in_ch_; ++ci)
        for (int kz = 0; kz < k_; ++kz)
          for (int ky = 0; ky < k_; ++ky)
            for (int kx = 0; kx < k_; ++kx)
              wt[(((static_cast<std::size_t>(ci) * out_ch_ + co) * k_ + (k_ - 1 - kz)) * k_ +
                  (k_ - 1 - ky)) * k_ + (k_ - 1 - kx)] =
                  w_[(((static_cast<std::size_t>(co) * in_ch_ + ci) * k_ + kz) * k_ + ky) * k_ + kx];
    const Tensor gyp = pad3d(gy, p);
    conv_core(gyp.data(), N, out_ch_, gyp.d(), gyp.h(), gyp.w(), wt.data(), nullptr, in_ch_, k_,
              1, gx.data(), D, H, W);
  } else {
    parallel_for(N * in_ch_, [&](int task) {
      const int n = task / in_ch_, ci = task % in_ch_;
      float* gp = gx.plane(n, ci);
      for (int z = 0; z < D; ++z)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x) {
            double acc = 0;
            for (int kz = 0; kz < k_; ++kz) {
              const int oz_num = z + p - kz;
              if (oz_num < 0 || oz_num % stride_ || oz_num / stride_ >= Do) continue;
              const int oz = oz_num / stride_;
              for (int ky = 0; ky < k_; ++ky) {
                const int oy_num = y + p - ky;
                if (oy_num < 0 || oy_num % stride_ || oy_num / stride_ >= Ho) continue;
                const int oy = oy_num / stride_;
                for (int kx = 0; kx < k_; ++kx) {
                  const int ox_num = x + p - kx;
                  if (ox_num < 0 || ox_num % stride_ || ox_num / stride_ >= Wo) continue;
                  const int ox = ox_num / stride_;
                  for (int co = 0; co < out_ch_; ++co)
                    acc += w_[(((static_cast<std::size_t>(co) * in_ch_ + ci) * k_ + kz) * k_ + ky) * k_ + kx] *
                           gy.plane(n, co)[(static_cast<std::size_t>(oz) * Ho + oy) * Wo + ox];
                }
              }
            }
            gp[(static_cast<std::size_t>(z) * H + y) * W + x] = static_cast<float>(acc);
          }
    });
  }
  return gx;
}

void Conv3d::collect_params(const std::string& prefix, std::vector<Param>& out) {
  out.push_back({prefix + ".w", &w_, &gw_});
  out.push_back({prefix + ".b", &b_, &gb_});
}

ConvTranspose3d::ConvTranspose3d(int in_ch, int out_ch, Rng& init_rng)
    : in_ch_(in_ch), out_ch_(out_ch) {
  const std::size_t nw = static_cast<std::size_t>(in_ch) * out_ch * 8;
  w_.resize(nw);
  const double std_dev = std::sqrt(2.0 / (static_cast<double>(in_ch) * 8.0));
  for (auto& v : w_) v = static_cast<float>(init_rng.normal(0.0, std_dev));
  b_.assign(out_ch, 0.0f);
  gw_.assign(nw, 0.0f);
  gb_.assign(out_ch, 0.0f);
}

Tensor ConvTranspose3d::forward(const Tensor& x) {
  if (x.c() != in_ch_) throw std::runtime_error("ConvTranspose3d: channel mismatch");
  x_ = x;
  const int D = x.d(), H = x.h(), W = x.w();
  Tensor out(x.n(), out_ch_, 2 * D, 2 * H, 2 * W);
  const int Ho = 2 * H, Wo = 2 * W;
  parallel_for(x.n() * out_ch_, [&](int task) {
    const int n = task / out_ch_, co = task % out_ch_;
    float* op = out.plane(n, co);
    for (int oz = 0; oz < 2 * D; ++oz)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          const int kz = oz & 1, ky = oy & 1, kx = ox & 1;
          double acc = b_[co];
          for (int ci = 0; ci < in_ch_; ++ci)
            acc += w_[(((static_cast<std::size_t>(ci) * out_ch_ + co) * 2 + kz) * 2 + ky) * 2 + kx] *
                   x.plane(n, ci)[(static_cast<std::size_t>(oz / 2) * H + oy / 2) * W + ox / 2];
          op[(static_cast<std::size_t>(oz) * Ho + oy) * Wo + ox] = static_cast<float>(acc);
        }
  });
  return out;
}

Tensor ConvTranspose3d::backward(const Tensor& gy) {
  const int D = x_.d(), H = x_.h(), W = x_.w();
  const int Ho = gy.h(), Wo = gy.w();

  for (int co = 0; co < out_ch_; ++co) {
    double acc = 0;
    for (int n = 0; n < gy.n(); ++n) {
      const float* g = gy.plane(n, co);
      for (std::size_t i = 0; i < gy.spatial(); ++i) acc += g[i];
    }
    gb_[co] += static_cast<float>(acc);
  }

  parallel_for(in_ch_, [&](int ci) {
    for (int co = 0; co < out_ch_; ++co)
      for (int kz = 0; kz < 2; ++kz)
        for (int ky = 0; ky < 2; ++ky)
          for (int kx = 0; kx < 2; ++kx) {
            double acc = 0;
            for (int n = 0; n < x_.n(); ++n) {
              const float* xp = x_.plane(n, ci);
              const float* gp = gy.plane(n, co);
              for (int z = 0; z < D; ++z)
                for (int y = 0; y < H; ++y)
                  for (int x = 0; x < W; ++x)
                    acc += xp[(static_cast<std::size_t>(z) * H + y) * W + x] *
                           gp[(static_cast<std::size_t>(2 * z + kz) * Ho + (2 * y + ky)) * Wo + (2 * x + kx)];
            }
            gw_[(((static_cast<std::size_t>(ci) * out_ch_ + co) * 2 + kz) * 2 + ky) * 2 + kx] +=
                static_cast<float>(acc);
          }
  });

  Tensor gx(x_.n(), in_ch_, D, H, W);
  parallel_for(x_.n() * in_ch_, [&](int task) {
    const int n = task / in_ch_, ci = task % in_ch_;
    float* gp = gx.plane(n, ci);
    for (int z = 0; z < D; ++z)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          double acc = 0;
          for (int co = 0; co < out_ch_; ++co) {
            const float* gyp = gy.plane(n, co);
            for (int kz = 0; kz < 2; ++kz)
              for (int ky = 0; ky < 2; ++ky)
                for (int kx = 0; kx < 2; ++kx)
                  acc += w_[(((static_cast<std::size_t>(ci) * out_ch_ + co) * 2 + kz) * 2 + ky) * 2 + kx] *
                         gyp[(static_cast<std::size_t>(2 * z + kz) * Ho + (2 * y + ky)) * Wo + (2 * x + kx)];
          }
          gp[(static_cast<std::size_t>(z) * H + y) * W + x] = static_cast<float>(acc);
        }
  });
  return gx;
}

void ConvTranspose3d::collect_params(const std::string& prefix, std::vector<Param>& out) {
  out.push_back({prefix + ".w", &w_, &gw_});
  out.push_back({prefix + ".b", &b_, &gb_});
}

InstanceNorm3d::InstanceNorm3d(int channels) : channels_(channels) {
  gamma_.assign(channels, 1.0f);
  beta_.assign(channels, 0.0f);
  ggamma_.assign(channels, 0.0f);
  gbeta_.assign(channels, 0.0f);
}

Tensor InstanceNorm3d::forward(const Tensor& x) {
  constexpr double EPS = 1e-5;
  xhat_ = Tensor(x.n(), x.c(), x.d(), x.h(), x.w());
  inv_std_.assign(static_cast<std::size_t>(x.n()) * x.c(), 0.0);
  Tensor out(x.n(), x.c(), x.d(), x.h(), x.w());
  const std::size_t m = x.spatial();
  parallel_for(x.n() * x.c(), [&](int task) {
    const int n = task / x.c(), c = task % x.c();
    const float* xp = x.plane(n, c);
    double mean = 0;
    for (std::size_t i = 0; i < m; ++i) mean += xp[i];
    mean /= static_cast<double>(m);
    double var = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const double d = xp[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    const double istd = 1.0 / std::sqrt(var + EPS);
    inv_std_[task] = istd;
    float* xh = xhat_.plane(n, c);
    float* op = out.plane(n, c);
    const float g = gamma_[c], b = beta_[c];
    for (std::size_t i = 0; i < m; ++i) {
      const float h = static_cast<float>((xp[i] - mean) * istd);
      xh[i] = h;
      op[i] = g * h + b;
    }
  });
  return out;
}

Tensor InstanceNorm3d::backward(const Tensor& gy) {
  Tensor gx(gy.n(), gy.c(), gy.d(), gy.h(), gy.w());
  const std::size_t m = gy.spatial();
  std::vector<double> dgamma(channels_, 0.0), dbeta(channels_, 0.0);
  for (int n = 0; n < gy.n(); ++n)
    for (int c = 0; c < gy.c(); ++c) {
      const float* g = gy.plane(n, c);
      const float* xh = xhat_.plane(n, c);
      double sg = 0, sgx = 0;
      for (std::size_t i = 0; i < m; ++i) {
        sg += g[i];
        sgx += g[i] * xh[i];
      }
      dgamma[c] += sgx;
      dbeta[c] += sg;
    }
  for (int c = 0; c < channels_; ++c) {
    ggamma_[c] += static_cast<float>(dgamma[c]);
    gbeta_[c] += static_cast<float>(dbeta[c]);
  }
  parallel_for(gy.n() * gy.c(), [&](int task) {
    const int n = task / gy.c(), c = task % gy.c();
    const float* g = gy.plane(n, c);
    const float* xh = xhat_.plane(n, c);
    float* out = gx.plane(n, c);
    double sg = 0, sgx = 0;
    for (std::size_t i = 0; i < m; ++i) {
      sg += g[i];
      sgx += g[i] * xh[i];
    }
    const double mg = sg / static_cast<double>(m);
    const double mgx = sgx / static_cast<double>(m);
    const double scale = gamma_[c] * inv_std_[task];
    for (std::size_t i = 0; i < m; ++i)
      out[i] = static_cast<float>(scale * (g[i] - mg - xh[i] * mgx));
  });
  return gx;
}

void InstanceNorm3d::collect_params(const std::string& prefix, std::vector<Param>& out) {
  out.push_back({prefix + ".gamma", &gamma_, &ggamma_});
  out.push_back({prefix + ".beta", &beta_, &gbeta_});
}

Tensor ReLU::forward(const Tensor& x) {
  Tensor out = x;
  positive_.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    positive_[i] = x.v[i] > 0 ? 1 : 0;
    if (!positive_[i]) out.v[i] *= slope_;
  }
  return out;
}

Tensor ReLU::backward(const Tensor& gy) const {
  Tensor gx = gy;
  for (std::size_t i = 0; i < gy.size(); ++i)
    if (!positive_[i]) gx.v[i] *= slope_;
  return gx;
}

Tensor MaxPool3d::forward(const Tensor& x) {
  if (x.d() % 2 || x.h() % 2 || x.w() % 2)
    throw std::runtime_error("MaxPool3d: dimensions must be even");
  in_shape_ = x.shape;
  const int D = x.d() / 2, H = x.h() / 2, W = x.w() / 2;
  Tensor out(x.n(), x.c(), D, H, W);
  argmax_.resize(out.size());
  const int Hi = x.h(), Wi = x.w();
  parallel_for(x.n() * x.c(), [&](int task) {
    const int n = task / x.c(), c = task % x.c();
    const float* ip = x.plane(n, c);
    float* op = out.plane(n, c);
    std::int32_t* am = argmax_.data() + (static_cast<std::size_t>(n) * x.c() + c) * out.spatial();
    for (int z = 0; z < D; ++z)
      for (int y = 0; y < H; ++y)
        for (int xo = 0; xo < W; ++xo) {
          float best = -3.0e38f;
          std::int32_t best_i = 0;
          for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const std::int32_t i =
                    static_cast<std::int32_t>((static_cast<std::size_t>(2 * z + dz) * Hi + (2 * y + dy)) * Wi +
                                              (2 * xo + dx));
                if (ip[i] > best) {
                  best = ip[i];
                  best_i = i;
                }
              }
          op[(static_cast<std::size_t>(z) * H + y) * W + xo] = best;
          am[(static_cast<std::size_t>(z) * H + y) * W + xo] = best_i;
        }
  });
  return out;
}

Tensor MaxPool3d::backward(const Tensor& gy) const {
  Tensor gx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3], in_shape_[4]);
  parallel_for(gy.n() * gy.c(), [&](int task) {
    const int n = task / gy.c(), c = task % gy.c();
    const float* gp = gy.plane(n, c);
    float* gxp = gx.plane(n, c);
    const std::int32_t* am = argmax_.data() + (static_cast<std::size_t>(n) * gy.c() + c) * gy.spatial();
    for (std::size_t i = 0; i < gy.spatial(); ++i) gxp[am[i]] += gp[i];
  });
  return gx;
}

namespace {

// align_corners=false mapping for scale factor 2.
inline void up2_weights(int o, int in_dim, int& i0, int& i1, float& w1) {
  const double ic = 0.5 * o - 0.25;
  const int f = static_cast<int>(std::floor(ic));
  w1 = static_cast<float>(ic - f);
  i0 = std::clamp(f, 0, in_dim - 1);
  i1 = std::clamp(f + 1, 0, in_dim - 1);
}

}  // namespace

Tensor UpsampleTrilinear2x::forward(const Tensor& x) {
  in_shape_ = x.shape;
  const int D = x.d(), H = x.h(), W = x.w();
  Tensor out(x.n(), x.c(), 2 * D, 2 * H, 2 * W);
  parallel_for(x.n() * x.c(), [&](int task) {
    const int n = task / x.c(), c = task % x.c();
    const float* ip = x.plane(n, c);
    float* op = out.plane(n, c);
    for (int oz = 0; oz < 2 * D; ++oz) {
      int z0, z1;
      float wz;
      up2_weights(oz, D, z0, z1, wz);
      for (int oy = 0; oy < 2 * H; ++oy) {
        int y0, y1;
        float wy;
        up2_weights(oy, H, y0, y1, wy);
        for (int ox = 0; ox < 2 * W; ++ox) {
          int x0, x1;
          float wx;
          up2_weights(ox, W, x0, x1, wx);
          auto v = [&](int zz, int yy, int xx) {
            return ip[(static_cast<std::size_t>(zz) * H + yy) * W + xx];
          };
          const float c00 = v(z0, y0, x0) * (1 - wx) + v(z0, y0, x1) * wx;
          const float c01 = v(z0, y1, x0) * (1 - wx) + v(z0, y1, x1) * wx;
          const float c10 = v(z1, y0, x0) * (1 - wx) + v(z1, y0, x1) * wx;
          const float c11 = v(z1, y1, x0) * (1 - wx) + v(z1, y1, x1) * wx;
          const float c0 = c00 * (1 - wy) + c01 * wy;
          const float c1 = c10 * (1 - wy) + c11 * wy;
          op[(static_cast<std::size_t>(oz) * 2 * H + oy) * 2 * W + ox] = c0 * (1 - wz) + c1 * wz;
        }
      }
    }
  });
  return out;
}

Tensor UpsampleTrilinear2x::backward(const Tensor& gy) const {
  const int D = in_shape_[2], H = in_shape_[3], W = in_shape_[4];
  Tensor gx(in_shape_[0], in_shape_[1], D, H, W);
  parallel_for(gy.n() * gy.c(), [&](int task) {
    const int n = task / gy.c(), c = task % gy.c();
    const float* gp = gy.plane(n, c);
    float* gxp = gx.plane(n, c);
    for (int oz = 0; oz < 2 * D; ++oz) {
      int z0, z1;
      float wz;
      up2_weights(oz, D, z0, z1, wz);
      for (int oy = 0; oy < 2 * H; ++oy) {
        int y0, y1;
        float wy;
        up2_weights(oy, H, y0, y1, wy);
        for (int ox = 0; ox < 2 * W; ++ox) {
          int x0, x1;
          float wx;
          up2_weights(ox, W, x0, x1, wx);
          const float g = gp[(static_cast<std::size_t>(oz) * 2 * H + oy) * 2 * W + ox];
          auto add = [&](int zz, int yy, int xx, float wgt) {
            gxp[(static_cast<std::size_t>(zz) * H + yy) * W + xx] += g * wgt;
          };
          add(z0, y0, x0, (1 - wz) * (1 - wy) * (1 - wx));
          add(z0, y0, x1, (1 - wz) * (1 - wy) * wx);
          add(z0, y1, x0, (1 - wz) * wy * (1 - wx));
          add(z0, y1, x1, (1 - wz) * wy * wx);
          add(z1, y0, x0, wz * (1 - wy) * (1 - wx));
          add(z1, y0, x1, wz * (1 - wy) * wx);
          add(z1, y1, x0, wz * wy * (1 - wx));
          add(z1, y1, x1, wz * wy * wx);
        }
      }
    }
  });
  return gx;
}

Tensor Dropout::forward(const Tensor& x, bool train, Rng& rng) {
  if (!train || rate_ <= 0.0) {
    mask_.clear();
    return x;
  }
  mask_.resize(x.size());
  const float scale = static_cast<float>(1.0 / (1.0 - rate_));
  Tensor out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = rng.uniform() >= rate_ ? scale : 0.0f;
    out.v[i] *= mask_[i];
  }
  return out;
}

Tensor Dropout::backward(const Tensor& gy) const {
  if (mask_.empty()) return gy;
  Tensor gx = gy;
  for (std::size_t i = 0; i < gy.size(); ++i) gx.v[i] *= mask_[i];
  return gx;
}

Tensor Tanh::forward(const Tensor& x) {
  y_ = x;
  for (auto& v : y_.v) v = std::tanh(v);
  return y_;
}

Tensor Tanh::backward(const Tensor& gy) const {
  Tensor gx = gy;
  for (std::size_t i = 0; i < gy.size(); ++i) gx.v[i] *= 1.0f - y_.v[i] * y_.v[i];
  return gx;
}

Tensor softmax2(const Tensor& logits) {
  if (logits.c() != 2) throw std::runtime_error("softmax2: needs 2 channels");
  Tensor out(logits.n(), 2, logits.d(), logits.h(), logits.w());
  const std::size_t m = logits.spatial();
  for (int n = 0; n < logits.n(); ++n) {
    const float* l0 = logits.plane(n, 0);
    const float* l1 = logits.plane(n, 1);
    float* p0 = out.plane(n, 0);
    float* p1 = out.plane(n, 1);
    for (std::size_t i = 0; i < m; ++i) {
      const float mx = std::max(l0[i], l1[i]);
      const float e0 = std::exp(l0[i] - mx);
      const float e1 = std::exp(l1[i] - mx);
      const float s = e0 + e1;
      p0[i] = e0 / s;
      p1[i] = e1 / s;
    }
  }
  return out;
}

Tensor softmax2_backward(const Tensor& probs, const Tensor& gprobs) {
  Tensor gl(probs.n(), 2, probs.d(), probs.h(), probs.w());
  const std::size_t m = probs.spatial();
  for (int n = 0; n < probs.n(); ++n) {
    const float* p0 = probs.plane(n, 0);
    const float* p1 = probs.plane(n, 1);
    const float* g0 = gprobs.plane(n, 0);
    const float* g1 = gprobs.plane(n, 1);
    float* o0 = gl.plane(n, 0);
    float* o1 = gl.plane(n, 1);
    for (std::size_t i = 0; i < m; ++i) {
      const float dot = g0[i] * p0[i] + g1[i] * p1[i];
      o0[i] = p0[i] * (g0[i] - dot);
      o1[i] = p1[i] * (g1[i] - dot);
    }
  }
  return gl;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n() != b.n() || a.d() != b.d() || a.h() != b.h() || a.w() != b.w())
    throw std::runtime_error("concat_channels: spatial mismatch");
  Tensor out(a.n(), a.c() + b.c(), a.d(), a.h(), a.w());
  for (int n = 0; n < a.n(); ++n) {
    for (int c = 0; c < a.c(); ++c)
      std::copy(a.plane(n, c), a.plane(n, c) + a.spatial(), out.plane(n, c));
    for (int c = 0; c < b.c(); ++c)
      std::copy(b.plane(n, c), b.plane(n, c) + b.spatial(), out.plane(n, a.c() + c));
  }
  return out;
}

void split_channels(const Tensor& g, int c_a, Tensor& ga, Tensor& gb) {
  ga = Tensor(g.n(), c_a, g.d(), g.h(), g.w());
  gb = Tensor(g.n(), g.c() - c_a, g.d(), g.h(), g.w());
  for (int n = 0; n < g.n(); ++n) {
    for (int c = 0; c < c_a; ++c)
      std::copy(g.plane(n, c), g.plane(n, c) + g.spatial(), ga.plane(n, c));
    for (int c = 0; c < gb.c(); ++c)
      std::copy(g.plane(n, c_a + c), g.plane(n, c_a + c) + g.spatial(), gb.plane(n, c));
  }
}

}  // namespace vb
