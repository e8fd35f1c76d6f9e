#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "semgan/rng.hpp"
#include "semgan/tensor.hpp"

// Minimal define-by-layer network framework with hand-written backprop.
// All activations are NCHW. Convolutions run as im2col + Eigen GEMM, which
// is where essentially all training time goes. Layers cache what their
// backward pass needs, so each forward() must be paired with at most one
// backward() before the next forward() on the same layer.
//
// backward(dy, param_grads) always returns d(input); parameter gradients
// accumulate into ParamT::grad only when param_grads is true, which lets a
// generator update backpropagate through frozen discriminators/segmenters
// without touching their gradient buffers.

namespace semgan::nn {

template <typename T>
struct ParamT {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;

  ParamT() = default;
  ParamT(std::string n, std::vector<int> shape)
      : name(std::move(n)), value(shape), grad(shape) {}
};

template <typename T>
class LayerT {
 public:
  virtual ~LayerT() = default;
  virtual TensorT<T> forward(const TensorT<T>& x, bool train) = 0;
  virtual TensorT<T> backward(const TensorT<T>& dy, bool param_grads) = 0;
  // Trainable parameters.
  virtual void params(std::vector<ParamT<T>*>& out) {}
  // Persistent non-trainable state (e.g. batch-norm running stats).
  virtual void state(std::vector<TensorT<T>*>& out) {}
};

enum class PadMode { kZero, kReflect };

namespace detail {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapM = Eigen::Map<const MatRM<T>>;

inline int reflect_index(int i, int n) {
  // PyTorch-style reflection without edge repetition; valid for pad < n.
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

inline int conv_out_dim(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

}  // namespace detail

template <typename T>
class Conv2dT : public LayerT<T> {
 public:
  Conv2dT(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad,
          PadMode pad_mode = PadMode::kZero)
      : in_ch_(in_ch),
        out_ch_(out_ch),
        kernel_(kernel),
        stride_(stride),
        pad_(pad),
        pad_mode_(pad_mode),
        weight_(name + ".weight", {out_ch, in_ch, kernel, kernel}),
        bias_(name + ".bias", {out_ch}) {
    if (kernel < 1 || stride < 1 || pad < 0) throw std::invalid_argument("conv: bad geometry");
  }

  void init(Rng& rng, T stddev = T(0.02)) {
    for (auto& v : weight_.value.vec()) v = static_cast<T>(rng.normal(0.0, double(stddev)));
    bias_.value.zero();
  }

  static std::pair<int, int> output_hw(int h, int w, int kernel, int stride, int pad) {
    return {detail::conv_out_dim(h, kernel, stride, pad),
            detail::conv_out_dim(w, kernel, stride, pad)};
  }

  TensorT<T> forward(const TensorT<T>& x, bool) override {
    if (x.ndim() != 4 || x.dim(1) != in_ch_) {
      throw std::invalid_argument("conv: expected [N," + std::to_string(in_ch_) +
                                  ",H,W], got " + x.shape_str());
    }
    const int n = x.dim(0);
    in_h_ = x.dim(2);
    in_w_ = x.dim(3);
    out_h_ = detail::conv_out_dim(in_h_, kernel_, stride_, pad_);
    out_w_ = detail::conv_out_dim(in_w_, kernel_, stride_, pad_);
    if (out_h_ < 1 || out_w_ < 1) {
      throw std::invalid_argument("conv: input " + std::to_string(in_h_) + "x" +
                                  std::to_string(in_w_) + " smaller than receptive field");
    }
    if (pad_mode_ == PadMode::kReflect && pad_ >= std::min(in_h_, in_w_)) {
      throw std::invalid_argument("conv: reflect pad too large for input");
    }
    const int ckk = in_ch_ * kernel_ * kernel_;
    const std::size_t hw = static_cast<std::size_t>(out_h_) * out_w_;
    col_ = TensorT<T>({n, ckk, out_h_ * out_w_});
    TensorT<T> y({n, out_ch_, out_h_, out_w_});
    detail::CMapM<T> w_mat(weight_.value.data(), out_ch_, ckk);
    for (int i = 0; i < n; ++i) {
      T* col = col_.data() + static_cast<std::size_t>(i) * ckk * hw;
      im2col(x.data() + static_cast<std::size_t>(i) * in_ch_ * in_h_ * in_w_, col);
      detail::CMapM<T> col_m(col, ckk, static_cast<int>(hw));
      detail::MapM<T> y_m(y.data() + static_cast<std::size_t>(i) * out_ch_ * hw, out_ch_,
                          static_cast<int>(hw));
      y_m.noalias() = w_mat * col_m;
      for (int c = 0; c < out_ch_; ++c) y_m.row(c).array() += bias_.value[c];
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy, bool param_grads) override {
    const int n = dy.dim(0);
    const int ckk = in_ch_ * kernel_ * kernel_;
    const std::size_t hw = static_cast<std::size_t>(out_h_) * out_w_;
    TensorT<T> dx({n, in_ch_, in_h_, in_w_});
    TensorT<T> dcol({ckk, out_h_ * out_w_});
    detail::CMapM<T> w_mat(weight_.value.data(), out_ch_, ckk);
    detail::MapM<T> dw_mat(weight_.grad.data(), out_ch_, ckk);
    for (int i = 0; i < n; ++i) {
      detail::CMapM<T> dy_m(dy.data() + static_cast<std::size_t>(i) * out_ch_ * hw, out_ch_,
                            static_cast<int>(hw));
      const T* col = col_.data() + static_cast<std::size_t>(i) * ckk * hw;
      detail::CMapM<T> col_m(col, ckk, static_cast<int>(hw));
      if (param_grads) {
        dw_mat.noalias() += dy_m * col_m.transpose();
        for (int c = 0; c < out_ch_; ++c) bias_.grad[c] += dy_m.row(c).sum();
      }
      detail::MapM<T> dcol_m(dcol.data(), ckk, static_cast<int>(hw));
      dcol_m.noalias() = w_mat.transpose() * dy_m;
      col2im(dcol.data(), dx.data() + static_cast<std::size_t>(i) * in_ch_ * in_h_ * in_w_);
    }
    return dx;
  }

  void params(std::vector<ParamT<T>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  int out_channels() const { return out_ch_; }

 private:
  void im2col(const T* x, T* col) const {
    const std::size_t plane = static_cast<std::size_t>(in_h_) * in_w_;
    std::size_t row = 0;
    for (int ci = 0; ci < in_ch_; ++ci) {
      const T* xc = x + ci * plane;
      for (int ky = 0; ky < kernel_; ++ky) {
        for (int kx = 0; kx < kernel_; ++kx, ++row) {
          T* dst = col + row * out_h_ * out_w_;
          for (int oy = 0; oy < out_h_; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            for (int ox = 0; ox < out_w_; ++ox, ++dst) {
              const int ix = ox * stride_ - pad_ + kx;
              if (pad_mode_ == PadMode::kZero) {
                *dst = (iy >= 0 && iy < in_h_ && ix >= 0 && ix < in_w_)
                           ? xc[static_cast<std::size_t>(iy) * in_w_ + ix]
                           : T(0);
              } else {
                *dst = xc[static_cast<std::size_t>(detail::reflect_index(iy, in_h_)) * in_w_ +
                          detail::reflect_index(ix, in_w_)];
              }
            }
          }
        }
      }
    }
  }

  void col2im(const T* dcol, T* dx) const {
    const std::size_t plane = static_cast<std::size_t>(in_h_) * in_w_;
    std::size_t row = 0;
    for (int ci = 0; ci < in_ch_; ++ci) {
      T* dxc = dx + ci * plane;
      for (int ky = 0; ky < kernel_; ++ky) {
        for (int kx = 0; kx < kernel_; ++kx, ++row) {
          const T* src = dcol + row * out_h_ * out_w_;
          for (int oy = 0; oy < out_h_; ++oy) {
            const int iy = oy * stride_ - pad_ + ky;
            for (int ox = 0; ox < out_w_; ++ox) {
              const int ix = ox * stride_ - pad_ + kx;
              const T g = src[static_cast<std::size_t>(oy) * out_w_ + ox];
              if (pad_mode_ == PadMode::kZero) {
                if (iy >= 0 && iy < in_h_ && ix >= 0 && ix < in_w_) {
                  dxc[static_cast<std::size_t>(iy) * in_w_ + ix] += g;
                }
              } else {
                dxc[static_cast<std::size_t>(detail::reflect_index(iy, in_h_)) * in_w_ +
                    detail::reflect_index(ix, in_w_)] += g;
              }
            }
          }
        }
      }
    }
  }

  int in_ch_, out_ch_, kernel_, stride_, pad_;
  PadMode pad_mode_;
  int in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
  ParamT<T> weight_, bias_;
  TensorT<T> col_;
};

// Per-sample, per-channel normalization without affine parameters.
template <typename T>
class InstanceNorm2dT : public LayerT<T> {
 public:
  explicit InstanceNorm2dT(T eps = T(1e-5)) : eps_(eps) {}

  TensorT<T> forward(const TensorT<T>& x, bool) override {
    const int n = x.dim(0);
    const int c = x.dim(1);
    const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    xhat_ = TensorT<T>(x.shape());
    inv_std_ = TensorT<T>({n, c});
    TensorT<T> y(x.shape());
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        const T* xc = x.data() + (static_cast<std::size_t>(i) * c + ch) * plane;
        T* hc = xhat_.data() + (static_cast<std::size_t>(i) * c + ch) * plane;
        T* yc = y.data() + (static_cast<std::size_t>(i) * c + ch) * plane;
        T mean = T(0);
        for (std::size_t p = 0; p < plane; ++p) mean += xc[p];
        mean /= static_cast<T>(plane);
        T var = T(0);
        for (std::size_t p = 0; p < plane; ++p) {
          const T d = xc[p] - mean;
          var += d * d;
        }
        var /= static_cast<T>(plane);
        const T inv_std = T(1) / std::sqrt(var + eps_);
        inv_std_.at(i, ch) = inv_std;
        for (std::size_t p = 0; p < plane; ++p) {
          hc[p] = (xc[p] - mean) * inv_std;
          yc[p] = hc[p];
        }
      }
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy, bool) override {
    const int n = dy.dim(0);
    const int c = dy.dim(1);
    const std::size_t plane = static_cast<std::size_t>(dy.dim(2)) * dy.dim(3);
    TensorT<T> dx(dy.shape());
    for (int i = 0; i < n; ++i) {
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
        const T* g = dy.data() + off;
        const T* h = xhat_.data() + off;
        T* d = dx.data() + off;
        T mean_g = T(0), mean_gh = T(0);
        for (std::size_t p = 0; p < plane; ++p) {
          mean_g += g[p];
          mean_gh += g[p] * h[p];
        }
        mean_g /= static_cast<T>(plane);
        mean_gh /= static_cast<T>(plane);
        const T inv_std = inv_std_.at(i, ch);
        for (std::size_t p = 0; p < plane; ++p) {
          d[p] = inv_std * (g[p] - mean_g - h[p] * mean_gh);
        }
      }
    }
    return dx;
  }

 private:
  T eps_;
  TensorT<T> xhat_;
  TensorT<T> inv_std_;
};

// Channel-wise batch normalization with affine parameters and running stats
// (normalization uses biased batch variance; running stats store the
// unbiased estimate, updated with momentum 0.1).
template <typename T>
class BatchNorm2dT : public LayerT<T> {
 public:
  BatchNorm2dT(std::string name, int channels, T eps = T(1e-5), T momentum = T(0.1))
      : channels_(channels),
        eps_(eps),
        momentum_(momentum),
        gamma_(name + ".weight", {channels}),
        beta_(name + ".bias", {channels}),
        running_mean_({channels}),
        running_var_({channels}) {
    gamma_.value.fill(T(1));
    running_var_.fill(T(1));
  }

  void init(Rng& rng, T stddev = T(0.02)) {
    for (auto& v : gamma_.value.vec()) v = static_cast<T>(rng.normal(1.0, double(stddev)));
    beta_.value.zero();
  }

  TensorT<T> forward(const TensorT<T>& x, bool train) override {
    const int n = x.dim(0);
    const int c = x.dim(1);
    if (c != channels_) throw std::invalid_argument("batchnorm: channel mismatch");
    const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    const std::size_t count = static_cast<std::size_t>(n) * plane;
    TensorT<T> y(x.shape());
    train_mode_ = train;
    if (train) {
      xhat_ = TensorT<T>(x.shape());
      inv_std_ = TensorT<T>({c});
      for (int ch = 0; ch < c; ++ch) {
        T mean = T(0);
        for (int i = 0; i < n; ++i) {
          const T* xc = x.data() + (static_cast<std::size_t>(i) * c + ch) * plane;
          for (std::size_t p = 0; p < plane; ++p) mean += xc[p];
        }
        mean /= static_cast<T>(count);
        T var = T(0);
        for (int i = 0; i < n; ++i) {
          const T* xc = x.data() + (static_cast<std::size_t>(i) * c + ch) * plane;
          for (std::size_t p = 0; p < plane; ++p) {
            const T d = xc[p] - mean;
            var += d * d;
          }
        }
        var /= static_cast<T>(count);
        const T inv_std = T(1) / std::sqrt(var + eps_);
        inv_std_[static_cast<std::size_t>(ch)] = inv_std;
        const T unbiased =
            count > 1 ? var * static_cast<T>(count) / static_cast<T>(count - 1) : var;
        running_mean_[static_cast<std::size_t>(ch)] =
            (T(1) - momentum_) * running_mean_[static_cast<std::size_t>(ch)] + momentum_ * mean;
        running_var_[static_cast<std::size_t>(ch)] =
            (T(1) - momentum_) * running_var_[static_cast<std::size_t>(ch)] + momentum_ * unbiased;
        for (int i = 0; i < n; ++i) {
          const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
          const T* xc = x.data() + off;
          T* hc = xhat_.data() + off;
          T* yc = y.data() + off;
          for (std::size_t p = 0; p < plane; ++p) {
            hc[p] = (xc[p] - mean) * inv_std;
            yc[p] = gamma_.value[ch] * hc[p] + beta_.value[ch];
          }
        }
      }
    } else {
      for (int ch = 0; ch < c; ++ch) {
        const T inv_std = T(1) / std::sqrt(running_var_[static_cast<std::size_t>(ch)] + eps_);
        for (int i = 0; i < n; ++i) {
          const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
          const T* xc = x.data() + off;
          T* yc = y.data() + off;
          const T scale = gamma_.value[ch] * inv_std;
          const T shift = beta_.value[ch] - running_mean_[static_cast<std::size_t>(ch)] * scale;
          for (std::size_t p = 0; p < plane; ++p) yc[p] = scale * xc[p] + shift;
        }
      }
    }
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy, bool param_grads) override {
    const int n = dy.dim(0);
    const int c = dy.dim(1);
    const std::size_t plane = static_cast<std::size_t>(dy.dim(2)) * dy.dim(3);
    const std::size_t count = static_cast<std::size_t>(n) * plane;
    TensorT<T> dx(dy.shape());
    if (!train_mode_) {
      for (int ch = 0; ch < c; ++ch) {
        const T scale =
            gamma_.value[ch] / std::sqrt(running_var_[static_cast<std::size_t>(ch)] + eps_);
        for (int i = 0; i < n; ++i) {
          const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
          for (std::size_t p = 0; p < plane; ++p) dx.data()[off + p] = dy.data()[off + p] * scale;
        }
      }
      return dx;
    }
    for (int ch = 0; ch < c; ++ch) {
      T sum_dy = T(0), sum_dy_h = T(0);
      for (int i = 0; i < n; ++i) {
        const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          sum_dy += dy.data()[off + p];
          sum_dy_h += dy.data()[off + p] * xhat_.data()[off + p];
        }
      }
      if (param_grads) {
        gamma_.grad[static_cast<std::size_t>(ch)] += sum_dy_h;
        beta_.grad[static_cast<std::size_t>(ch)] += sum_dy;
      }
      const T inv_std = inv_std_[static_cast<std::size_t>(ch)];
      const T scale = gamma_.value[ch] * inv_std / static_cast<T>(count);
      for (int i = 0; i < n; ++i) {
        const std::size_t off = (static_cast<std::size_t>(i) * c + ch) * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          dx.data()[off + p] = scale * (static_cast<T>(count) * dy.data()[off + p] - sum_dy -
                                        xhat_.data()[off + p] * sum_dy_h);
        }
      }
    }
    return dx;
  }

  void params(std::vector<ParamT<T>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

  void state(std::vector<TensorT<T>*>& out) override {
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
  }

 private:
  int channels_;
  T eps_, momentum_;
  bool train_mode_ = true;
  ParamT<T> gamma_, beta_;
  TensorT<T> running_mean_, running_var_;
  TensorT<T> xhat_, inv_std_;
};

template <typename T>
class ReluT : public LayerT<T> {
 public:
  TensorT<T> forward(const TensorT<T>& x, bool) override {
    y_ = x;
    for (auto& v : y_.vec()) v = v > T(0) ? v : T(0);
    return y_;
  }
  TensorT<T> backward(const TensorT<T>& dy, bool) override {
    TensorT<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = y_[i] > T(0) ? dy[i] : T(0);
    return dx;
  }

 private:
  TensorT<T> y_;
};

template <typename T>
class LeakyReluT : public LayerT<T> {
 public:
  explicit LeakyReluT(T slope = T(0.2)) : slope_(slope) {}
  TensorT<T> forward(const TensorT<T>& x, bool) override {
    x_ = x;
    TensorT<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : slope_ * x[i];
    return y;
  }
  TensorT<T> backward(const TensorT<T>& dy, bool) override {
    TensorT<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = x_[i] > T(0) ? dy[i] : slope_ * dy[i];
    return dx;
  }

 private:
  T slope_;
  TensorT<T> x_;
};

template <typename T>
class TanhT : public LayerT<T> {
 public:
  TensorT<T> forward(const TensorT<T>& x, bool) override {
    y_ = TensorT<T>(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y_[i] = std::tanh(x[i]);
    return y_;
  }
  TensorT<T> backward(const TensorT<T>& dy, bool) override {
    TensorT<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * (T(1) - y_[i] * y_[i]);
    return dx;
  }

 private:
  TensorT<T> y_;
};

template <typename T>
class SigmoidT : public LayerT<T> {
 public:
  TensorT<T> forward(const TensorT<T>& x, bool) override {
    y_ = TensorT<T>(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y_[i] = T(1) / (T(1) + std::exp(-x[i]));
    return y_;
  }
  TensorT<T> backward(const TensorT<T>& dy, bool) override {
    TensorT<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * y_[i] * (T(1) - y_[i]);
    return dx;
  }

 private:
  TensorT<T> y_;
};

// Nearest-neighbor 2x upsampling.
template <typename T>
class Upsample2xT : public LayerT<T> {
 public:
  TensorT<T> forward(const TensorT<T>& x, bool) override {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    in_h_ = h;
    in_w_ = w;
    TensorT<T> y({n, c, 2 * h, 2 * w});
    for (int i = 0; i < n * c; ++i) {
      const T* xp = x.data() + static_cast<std::size_t>(i) * h * w;
      T* yp = y.data() + static_cast<std::size_t>(i) * 4 * h * w;
      for (int r = 0; r < h; ++r) {
        for (int col = 0; col < w; ++col) {
          const T v = xp[static_cast<std::size_t>(r) * w + col];
          T* dst = yp + static_cast<std::size_t>(2 * r) * 2 * w + 2 * col;
          dst[0] = v;
          dst[1] = v;
          dst[2 * w] = v;
          dst[2 * w + 1] = v;
        }
      }
    }
    return y;
  }
  TensorT<T> backward(const TensorT<T>& dy, bool) override {
    const int n = dy.dim(0), c = dy.dim(1);
    TensorT<T> dx({n, c, in_h_, in_w_});
    for (int i = 0; i < n * c; ++i) {
      const T* gp = dy.data() + static_cast<std::size_t>(i) * 4 * in_h_ * in_w_;
      T* dp = dx.data() + static_cast<std::size_t>(i) * in_h_ * in_w_;
      for (int r = 0; r < in_h_; ++r) {
        for (int col = 0; col < in_w_; ++col) {
          const T* src = gp + static_cast<std::size_t>(2 * r) * 2 * in_w_ + 2 * col;
          dp[static_cast<std::size_t>(r) * in_w_ + col] =
              src[0] + src[1] + src[2 * in_w_] + src[2 * in_w_ + 1];
        }
      }
    }
    return dx;
  }

 private:
  int in_h_ = 0, in_w_ = 0;
};

// 2x2 stride-2 max pooling; input H, W must be even.
template <typename T>
class MaxPool2dT : public LayerT<T> {
 public:
  TensorT<T> forward(const TensorT<T>& x, bool) override {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % 2 || w % 2) throw std::invalid_argument("maxpool: H, W must be even");
    in_h_ = h;
    in_w_ = w;
    TensorT<T> y({n, c, h / 2, w / 2});
    argmax_.assign(y.size(), 0);
    for (int i = 0; i < n * c; ++i) {
      const T* xp = x.data() + static_cast<std::size_t>(i) * h * w;
      T* yp = y.data() + static_cast<std::size_t>(i) * (h / 2) * (w / 2);
      std::size_t o = static_cast<std::size_t>(i) * (h / 2) * (w / 2);
      for (int r = 0; r < h; r += 2) {
        for (int col = 0; col < w; col += 2, ++o) {
          const std::size_t base = static_cast<std::size_t>(r) * w + col;
          std::size_t best = base;
          if (xp[base + 1] > xp[best]) best = base + 1;
          if (xp[base + w] > xp[best]) best = base + w;
          if (xp[base + w + 1] > xp[best]) best = base + w + 1;
          yp[(static_cast<std::size_t>(r / 2)) * (w / 2) + col / 2] = xp[best];
          argmax_[o] = static_cast<std::size_t>(i) * h * w + best;
        }
      }
    }
    return y;
  }
  TensorT<T> backward(const TensorT<T>& dy, bool) override {
    TensorT<T> dx({dy.dim(0), dy.dim(1), in_h_, in_w_});
    for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax_[o]] += dy[o];
    return dx;
  }

 private:
  int in_h_ = 0, in_w_ = 0;
  std::vector<std::size_t> argmax_;
};

template <typename T>
class SequentialT : public LayerT<T> {
 public:
  SequentialT() = default;

  template <typename L, typename... Args>
  L* add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L* raw = layer.get();
    layers_.push_back(std::move(layer));
    return raw;
  }

  TensorT<T> forward(const TensorT<T>& x, bool train) override {
    TensorT<T> h = x;
    for (auto& l : layers_) h = l->forward(h, train);
    return h;
  }

  TensorT<T> backward(const TensorT<T>& dy, bool param_grads) override {
    TensorT<T> g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      g = (*it)->backward(g, param_grads);
    }
    return g;
  }

  void params(std::vector<ParamT<T>*>& out) override {
    for (auto& l : layers_) l->params(out);
  }
  void state(std::vector<TensorT<T>*>& out) override {
    for (auto& l : layers_) l->state(out);
  }

  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<LayerT<T>>> layers_;
};

// y = x + body(x); the body must preserve shape.
template <typename T>
class ResBlockT : public LayerT<T> {
 public:
  explicit ResBlockT(std::unique_ptr<SequentialT<T>> body) : body_(std::move(body)) {}

  TensorT<T> forward(const TensorT<T>& x, bool train) override {
    TensorT<T> y = body_->forward(x, train);
    if (!y.same_shape(x)) throw std::invalid_argument("resblock: body changed shape");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
    return y;
  }

  TensorT<T> backward(const TensorT<T>& dy, bool param_grads) override {
    TensorT<T> dx = body_->backward(dy, param_grads);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    return dx;
  }

  void params(std::vector<ParamT<T>*>& out) override { body_->params(out); }
  void state(std::vector<TensorT<T>*>& out) override { body_->state(out); }

 private:
  std::unique_ptr<SequentialT<T>> body_;
};

// Adam with bias correction. One instance owns one parameter group; the
// moment buffers serialize with checkpoints.
template <typename T>
class AdamT {
 public:
  AdamT() = default;
  AdamT(std::vector<ParamT<T>*> params, T beta1 = T(0.5), T beta2 = T(0.999), T eps = T(1e-8))
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->grad.zero();
  }

  void step(T lr) {
    ++t_;
    const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      ParamT<T>* p = params_[i];
      for (std::size_t j = 0; j < p->value.size(); ++j) {
        const T g = p->grad[j];
        m_[i][j] = beta1_ * m_[i][j] + (T(1) - beta1_) * g;
        v_[i][j] = beta2_ * v_[i][j] + (T(1) - beta2_) * g * g;
        const T mhat = m_[i][j] / bc1;
        const T vhat = v_[i][j] / bc2;
        p->value[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  std::int64_t steps() const { return t_; }
  std::vector<ParamT<T>*>& params() { return params_; }
  std::vector<TensorT<T>>& moment1() { return m_; }
  std::vector<TensorT<T>>& moment2() { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  std::vector<ParamT<T>*> params_;
  std::vector<TensorT<T>> m_, v_;
  T beta1_ = T(0.5), beta2_ = T(0.999), eps_ = T(1e-8);
  std::int64_t t_ = 0;
};

template <typename T>
std::size_t param_count(const std::vector<ParamT<T>*>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->value.size();
  return n;
}

template <typename T>
double grad_norm(const std::vector<ParamT<T>*>& params) {
  double sq = 0.0;
  for (const auto* p : params) {
    for (std::size_t i = 0; i < p->grad.size(); ++i) {
      sq += static_cast<double>(p->grad[i]) * static_cast<double>(p->grad[i]);
    }
  }
  return std::sqrt(sq);
}

using Layer = LayerT<float>;
using Param = ParamT<float>;
using Conv2d = Conv2dT<float>;
using InstanceNorm2d = InstanceNorm2dT<float>;
using BatchNorm2d = BatchNorm2dT<float>;
using Relu = ReluT<float>;
using LeakyRelu = LeakyReluT<float>;
using Tanh = TanhT<float>;
using Sigmoid = SigmoidT<float>;
using Upsample2x = Upsample2xT<float>;
using MaxPool2d = MaxPool2dT<float>;
using Sequential = SequentialT<float>;
using ResBlock = ResBlockT<float>;
using Adam = AdamT<float>;

}  // namespace semgan::nn
