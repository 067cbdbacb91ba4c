#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hfr/rng.hpp"
#include "hfr/tensor.hpp"

namespace hfr::nn {

// Named view of a parameter and its gradient accumulator. Optimizers and
// checkpoints walk these in registration order, which is deterministic.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

template <typename T>
using ParamRegistry = std::vector<ParamRef<T>>;

template <typename T>
void zero_grads(ParamRegistry<T>& params) {
  for (auto& p : params) p.grad->fill(T(0));
}

inline std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride,
                                 std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

inline std::size_t conv_transpose_out_size(std::size_t in, std::size_t k,
                                           std::size_t stride, std::size_t pad) {
  return (in - 1) * stride + k - 2 * pad;
}

// cols layout {ch*k*k, grid_h*grid_w}; column (gy,gx) holds the receptive
// window im[c, gy*stride - pad + ki, gx*stride - pad + kj]. The same index
// map serves the strided convolution (grid = conv output) and the transposed
// convolution (grid = its input).
template <typename T>
void im2col(const T* im, std::size_t ch, std::size_t h, std::size_t w,
            std::size_t k, std::size_t stride, long pad, std::size_t grid_h,
            std::size_t grid_w, T* cols) {
  const std::size_t grid = grid_h * grid_w;
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* dst = cols + ((c * k + ki) * k + kj) * grid;
        for (std::size_t gy = 0; gy < grid_h; ++gy) {
          long iy = static_cast<long>(gy * stride) - pad + static_cast<long>(ki);
          if (iy < 0 || iy >= static_cast<long>(h)) {
            for (std::size_t gx = 0; gx < grid_w; ++gx) dst[gy * grid_w + gx] = T(0);
            continue;
          }
          const T* src_row = im + (c * h + iy) * w;
          for (std::size_t gx = 0; gx < grid_w; ++gx) {
            long ix = static_cast<long>(gx * stride) - pad + static_cast<long>(kj);
            dst[gy * grid_w + gx] =
                (ix < 0 || ix >= static_cast<long>(w)) ? T(0) : src_row[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into the image.
template <typename T>
void col2im(const T* cols, std::size_t ch, std::size_t h, std::size_t w,
            std::size_t k, std::size_t stride, long pad, std::size_t grid_h,
            std::size_t grid_w, T* im) {
  const std::size_t grid = grid_h * grid_w;
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* src = cols + ((c * k + ki) * k + kj) * grid;
        for (std::size_t gy = 0; gy < grid_h; ++gy) {
          long iy = static_cast<long>(gy * stride) - pad + static_cast<long>(ki);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          T* dst_row = im + (c * h + iy) * w;
          for (std::size_t gx = 0; gx < grid_w; ++gx) {
            long ix = static_cast<long>(gx * stride) - pad + static_cast<long>(kj);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            dst_row[ix] += src[gy * grid_w + gx];
          }
        }
      }
    }
  }
}

template <typename T>
class Conv2d {
 public:
  Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t k, std::size_t stride,
         std::size_t pad)
      : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad),
        weight_({out_ch, in_ch, k, k}), bias_({out_ch}),
        gweight_({out_ch, in_ch, k, k}), gbias_({out_ch}) {}

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.push_back({prefix + "/w", &weight_, &gweight_});
    reg.push_back({prefix + "/b", &bias_, &gbias_});
  }

  std::size_t out_hw(std::size_t in_hw) const {
    return conv_out_size(in_hw, k_, stride_, pad_);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    if (x.ndim() != 4 || x.dim(1) != in_ch_)
      throw ShapeError("Conv2d: bad input " + x.shape_str());
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = out_hw(h), ow = out_hw(w);
    Tensor<T> y({n, out_ch_, oh, ow});
    Tensor<T> cols({in_ch_ * k_ * k_, oh * ow});
    auto wmat = weight_.mat(out_ch_, in_ch_ * k_ * k_);
    for (std::size_t i = 0; i < n; ++i) {
      im2col(x.data() + i * in_ch_ * h * w, in_ch_, h, w, k_, stride_,
             static_cast<long>(pad_), oh, ow, cols.data());
      auto cmat = cols.mat(in_ch_ * k_ * k_, oh * ow);
      typename Tensor<T>::MatMap ymat(y.data() + i * out_ch_ * oh * ow,
                                      static_cast<Eigen::Index>(out_ch_),
                                      static_cast<Eigen::Index>(oh * ow));
      ymat.noalias() = wmat * cmat;
      for (std::size_t c = 0; c < out_ch_; ++c)
        ymat.row(static_cast<Eigen::Index>(c)).array() += bias_[c];
    }
    if (train) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const Tensor<T>& x = input_;
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = gy.dim(2), ow = gy.dim(3);
    Tensor<T> gx(x.shape());
    Tensor<T> cols({in_ch_ * k_ * k_, oh * ow});
    Tensor<T> gcols({in_ch_ * k_ * k_, oh * ow});
    auto wmat = weight_.mat(out_ch_, in_ch_ * k_ * k_);
    auto gweight = gweight_.mat(out_ch_, in_ch_ * k_ * k_);
    for (std::size_t i = 0; i < n; ++i) {
      typename Tensor<T>::ConstMatMap gmat(gy.data() + i * out_ch_ * oh * ow,
                                           static_cast<Eigen::Index>(out_ch_),
                                           static_cast<Eigen::Index>(oh * ow));
      im2col(x.data() + i * in_ch_ * h * w, in_ch_, h, w, k_, stride_,
             static_cast<long>(pad_), oh, ow, cols.data());
      auto cmat = cols.mat(in_ch_ * k_ * k_, oh * ow);
      gweight.noalias() += gmat * cmat.transpose();
      for (std::size_t c = 0; c < out_ch_; ++c)
        gbias_[c] += gmat.row(static_cast<Eigen::Index>(c)).sum();
      auto gcmat = gcols.mat(in_ch_ * k_ * k_, oh * ow);
      gcmat.noalias() = wmat.transpose() * gmat;
      col2im(gcols.data(), in_ch_, h, w, k_, stride_, static_cast<long>(pad_), oh,
             ow, gx.data() + i * in_ch_ * h * w);
    }
    return gx;
  }

 private:
  std::size_t in_ch_, out_ch_, k_, stride_, pad_;
  Tensor<T> weight_, bias_, gweight_, gbias_;
  Tensor<T> input_;
};

template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d(std::size_t in_ch, std::size_t out_ch, std::size_t k,
                  std::size_t stride, std::size_t pad)
      : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad),
        weight_({in_ch, out_ch, k, k}), bias_({out_ch}),
        gweight_({in_ch, out_ch, k, k}), gbias_({out_ch}) {}

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.push_back({prefix + "/w", &weight_, &gweight_});
    reg.push_back({prefix + "/b", &bias_, &gbias_});
  }

  std::size_t out_hw(std::size_t in_hw) const {
    return conv_transpose_out_size(in_hw, k_, stride_, pad_);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    if (x.ndim() != 4 || x.dim(1) != in_ch_)
      throw ShapeError("ConvTranspose2d: bad input " + x.shape_str());
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = out_hw(h), ow = out_hw(w);
    Tensor<T> y({n, out_ch_, oh, ow});
    Tensor<T> cols({out_ch_ * k_ * k_, h * w});
    auto wmat = weight_.mat(in_ch_, out_ch_ * k_ * k_);
    for (std::size_t i = 0; i < n; ++i) {
      typename Tensor<T>::ConstMatMap xmat(x.data() + i * in_ch_ * h * w,
                                           static_cast<Eigen::Index>(in_ch_),
                                           static_cast<Eigen::Index>(h * w));
      auto cmat = cols.mat(out_ch_ * k_ * k_, h * w);
      cmat.noalias() = wmat.transpose() * xmat;
      T* out = y.data() + i * out_ch_ * oh * ow;
      col2im(cols.data(), out_ch_, oh, ow, k_, stride_, static_cast<long>(pad_), h,
             w, out);
      for (std::size_t c = 0; c < out_ch_; ++c) {
        T* plane = out + c * oh * ow;
        for (std::size_t j = 0; j < oh * ow; ++j) plane[j] += bias_[c];
      }
    }
    if (train) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const Tensor<T>& x = input_;
    const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = gy.dim(2), ow = gy.dim(3);
    Tensor<T> gx(x.shape());
    Tensor<T> gcols({out_ch_ * k_ * k_, h * w});
    auto wmat = weight_.mat(in_ch_, out_ch_ * k_ * k_);
    auto gweight = gweight_.mat(in_ch_, out_ch_ * k_ * k_);
    for (std::size_t i = 0; i < n; ++i) {
      const T* gout = gy.data() + i * out_ch_ * oh * ow;
      im2col(gout, out_ch_, oh, ow, k_, stride_, static_cast<long>(pad_), h, w,
             gcols.data());
      auto gcmat = gcols.mat(out_ch_ * k_ * k_, h * w);
      typename Tensor<T>::ConstMatMap xmat(x.data() + i * in_ch_ * h * w,
                                           static_cast<Eigen::Index>(in_ch_),
                                           static_cast<Eigen::Index>(h * w));
      gweight.noalias() += xmat * gcmat.transpose();
      typename Tensor<T>::MatMap gxmat(gx.data() + i * in_ch_ * h * w,
                                       static_cast<Eigen::Index>(in_ch_),
                                       static_cast<Eigen::Index>(h * w));
      gxmat.noalias() = wmat * gcmat;
      for (std::size_t c = 0; c < out_ch_; ++c) {
        const T* plane = gout + c * oh * ow;
        T acc = T(0);
        for (std::size_t j = 0; j < oh * ow; ++j) acc += plane[j];
        gbias_[c] += acc;
      }
    }
    return gx;
  }

 private:
  std::size_t in_ch_, out_ch_, k_, stride_, pad_;
  Tensor<T> weight_, bias_, gweight_, gbias_;
  Tensor<T> input_;
};

template <typename T>
class Linear {
 public:
  Linear(std::size_t in_dim, std::size_t out_dim, bool with_bias = true)
      : in_dim_(in_dim), out_dim_(out_dim), with_bias_(with_bias),
        weight_({out_dim, in_dim}), bias_({out_dim}),
        gweight_({out_dim, in_dim}), gbias_({out_dim}) {}

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }
  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }

  void register_params(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.push_back({prefix + "/w", &weight_, &gweight_});
    if (with_bias_) reg.push_back({prefix + "/b", &bias_, &gbias_});
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    if (x.ndim() != 2 || x.dim(1) != in_dim_)
      throw ShapeError("Linear: bad input " + x.shape_str());
    const std::size_t n = x.dim(0);
    Tensor<T> y({n, out_dim_});
    y.mat(n, out_dim_).noalias() = x.mat(n, in_dim_) * weight_.mat(out_dim_, in_dim_).transpose();
    if (with_bias_) {
      auto ymat = y.mat(n, out_dim_);
      for (std::size_t j = 0; j < out_dim_; ++j)
        ymat.col(static_cast<Eigen::Index>(j)).array() += bias_[j];
    }
    if (train) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const std::size_t n = input_.dim(0);
    gweight_.mat(out_dim_, in_dim_).noalias() +=
        gy.mat(n, out_dim_).transpose() * input_.mat(n, in_dim_);
    if (with_bias_) {
      auto gmat = gy.mat(n, out_dim_);
      for (std::size_t j = 0; j < out_dim_; ++j)
        gbias_[j] += gmat.col(static_cast<Eigen::Index>(j)).sum();
    }
    Tensor<T> gx({n, in_dim_});
    gx.mat(n, in_dim_).noalias() = gy.mat(n, out_dim_) * weight_.mat(out_dim_, in_dim_);
    return gx;
  }

 private:
  std::size_t in_dim_, out_dim_;
  bool with_bias_;
  Tensor<T> weight_, bias_, gweight_, gbias_;
  Tensor<T> input_;
};

template <typename T>
class LeakyRelu {
 public:
  explicit LeakyRelu(T alpha = T(0)) : alpha_(alpha) {}

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> y = x;
    for (auto& v : y.vec())
      if (v < T(0)) v *= alpha_;
    if (train) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.numel(); ++i)
      if (input_[i] < T(0)) gx[i] *= alpha_;
    return gx;
  }

 private:
  T alpha_;
  Tensor<T> input_;
};

template <typename T>
class Tanh {
 public:
  Tensor<T> forward(const Tensor<T>& x, bool train) {
    Tensor<T> y = x;
    for (auto& v : y.vec()) v = std::tanh(v);
    if (train) output_ = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.numel(); ++i)
      gx[i] *= T(1) - output_[i] * output_[i];
    return gx;
  }

 private:
  Tensor<T> output_;
};

// Inverted dropout: scaled at train time, identity (no RNG draw) at eval.
template <typename T>
class Dropout {
 public:
  explicit Dropout(double p) : p_(p) {}

  Tensor<T> forward(const Tensor<T>& x, bool train, Rng* rng) {
    if (!train || p_ <= 0.0) return x;
    Tensor<T> y = x;
    mask_ = Tensor<T>(x.shape());
    const T scale = static_cast<T>(1.0 / (1.0 - p_));
    for (std::size_t i = 0; i < y.numel(); ++i) {
      if (rng->uniform() < p_) {
        mask_[i] = T(0);
        y[i] = T(0);
      } else {
        mask_[i] = scale;
        y[i] *= scale;
      }
    }
    active_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    if (!active_) return gy;
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] *= mask_[i];
    return gx;
  }

  void reset() { active_ = false; }

 private:
  double p_;
  bool active_ = false;
  Tensor<T> mask_;
};

template <typename T>
class MaxPool2 {
 public:
  Tensor<T> forward(const Tensor<T>& x, bool train) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor<T> y({n, c, oh, ow});
    Tensor<std::size_t> arg({n, c, oh, ow});
    for (std::size_t i = 0; i < n * c; ++i) {
      const T* plane = x.data() + i * h * w;
      T* out = y.data() + i * oh * ow;
      std::size_t* am = arg.data() + i * oh * ow;
      for (std::size_t py = 0; py < oh; ++py) {
        for (std::size_t px = 0; px < ow; ++px) {
          std::size_t base = (py * 2) * w + px * 2;
          std::size_t idx[4] = {base, base + 1, base + w, base + w + 1};
          std::size_t best = idx[0];
          for (int k = 1; k < 4; ++k)
            if (plane[idx[k]] > plane[best]) best = idx[k];
          out[py * ow + px] = plane[best];
          am[py * ow + px] = i * h * w + best;
        }
      }
    }
    if (train) {
      argmax_ = std::move(arg);
      in_shape_ = x.shape();
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx(in_shape_);
    for (std::size_t i = 0; i < gy.numel(); ++i) gx[argmax_[i]] += gy[i];
    return gx;
  }

 private:
  Tensor<std::size_t> argmax_;
  std::vector<std::size_t> in_shape_;
};

// Channel concatenation [a | b] with the matching backward split.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2),
                    w = a.dim(3);
  if (b.dim(0) != n || b.dim(2) != h || b.dim(3) != w)
    throw ShapeError("concat_channels: shape mismatch");
  Tensor<T> y({n, ca + cb, h, w});
  const std::size_t plane = h * w;
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(a.data() + i * ca * plane, a.data() + (i + 1) * ca * plane,
              y.data() + i * (ca + cb) * plane);
    std::copy(b.data() + i * cb * plane, b.data() + (i + 1) * cb * plane,
              y.data() + (i * (ca + cb) + ca) * plane);
  }
  return y;
}

template <typename T>
void split_channels(const Tensor<T>& g, std::size_t ca, Tensor<T>& ga, Tensor<T>& gb) {
  const std::size_t n = g.dim(0), c = g.dim(1), h = g.dim(2), w = g.dim(3);
  const std::size_t cb = c - ca, plane = h * w;
  ga = Tensor<T>({n, ca, h, w});
  gb = Tensor<T>({n, cb, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(g.data() + i * c * plane, g.data() + (i * c + ca) * plane,
              ga.data() + i * ca * plane);
    std::copy(g.data() + (i * c + ca) * plane, g.data() + (i + 1) * c * plane,
              gb.data() + i * cb * plane);
  }
}

}  // namespace hfr::nn
