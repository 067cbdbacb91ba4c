#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "hfr/tensor.hpp"

namespace hfr::nn {

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

// log(1 + exp(x)) without overflow; -log(sigmoid(x)) == softplus(-x).
template <typename T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Mean absolute difference over all elements.
template <typename T>
T l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "l1_loss");
  long double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    acc += std::abs(static_cast<long double>(a[i]) - static_cast<long double>(b[i]));
  return static_cast<T>(acc / static_cast<long double>(a.numel()));
}

// d(l1)/da; sign convention sign(0) = 0.
template <typename T>
Tensor<T> l1_loss_grad(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "l1_loss_grad");
  Tensor<T> g(a.shape());
  const T inv = T(1) / static_cast<T>(a.numel());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    T d = a[i] - b[i];
    g[i] = d > T(0) ? inv : (d < T(0) ? -inv : T(0));
  }
  return g;
}

template <typename T>
struct AdversarialLosses {
  T loss_d;      // -mean log s(d_real) - mean log s(-d_fake)
  T loss_g_adv;  // -mean log s(d_fake), non-saturating
};

template <typename T>
AdversarialLosses<T> loss_adversarial(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  long double ld = 0.0, lg = 0.0;
  for (std::size_t i = 0; i < d_real.numel(); ++i) ld += softplus(-d_real[i]);
  ld /= static_cast<long double>(d_real.numel());
  long double lf = 0.0;
  for (std::size_t i = 0; i < d_fake.numel(); ++i) {
    lf += softplus(d_fake[i]);
    lg += softplus(-d_fake[i]);
  }
  ld += lf / static_cast<long double>(d_fake.numel());
  lg /= static_cast<long double>(d_fake.numel());
  return {static_cast<T>(ld), static_cast<T>(lg)};
}

// Gradients of loss_d with respect to both logit maps.
template <typename T>
void loss_d_grads(const Tensor<T>& d_real, const Tensor<T>& d_fake,
                  Tensor<T>& g_real, Tensor<T>& g_fake) {
  g_real = Tensor<T>(d_real.shape());
  g_fake = Tensor<T>(d_fake.shape());
  const T inv_r = T(1) / static_cast<T>(d_real.numel());
  const T inv_f = T(1) / static_cast<T>(d_fake.numel());
  for (std::size_t i = 0; i < d_real.numel(); ++i)
    g_real[i] = (stable_sigmoid(d_real[i]) - T(1)) * inv_r;
  for (std::size_t i = 0; i < d_fake.numel(); ++i)
    g_fake[i] = stable_sigmoid(d_fake[i]) * inv_f;
}

template <typename T>
Tensor<T> loss_g_adv_grad(const Tensor<T>& d_fake) {
  Tensor<T> g(d_fake.shape());
  const T inv = T(1) / static_cast<T>(d_fake.numel());
  for (std::size_t i = 0; i < d_fake.numel(); ++i)
    g[i] = (stable_sigmoid(d_fake[i]) - T(1)) * inv;
  return g;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  Tensor<T> p(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    T mx = logits.at2(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits.at2(i, j));
    long double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      T e = std::exp(logits.at2(i, j) - mx);
      p.at2(i, j) = e;
      z += e;
    }
    for (std::size_t j = 0; j < c; ++j)
      p.at2(i, j) = static_cast<T>(p.at2(i, j) / z);
  }
  return p;
}

enum class Reduction { kMean, kSum };

// Softmax cross-entropy; fills grad (d loss / d logits) when requested.
template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                        Reduction reduction, Tensor<T>* grad = nullptr) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n)
    throw ShapeError("softmax_cross_entropy: label count mismatch");
  Tensor<T> p = softmax_rows(logits);
  long double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw InvalidInputError("softmax_cross_entropy: label out of range");
    loss -= std::log(std::max(static_cast<long double>(p.at2(i, y)), 1e-300l));
  }
  const T scale = reduction == Reduction::kMean ? T(1) / static_cast<T>(n) : T(1);
  if (grad) {
    *grad = p;
    for (std::size_t i = 0; i < n; ++i) {
      grad->at2(i, static_cast<std::size_t>(labels[i])) -= T(1);
      for (std::size_t j = 0; j < c; ++j) grad->at2(i, j) *= scale;
    }
  }
  if (reduction == Reduction::kMean) loss /= static_cast<long double>(n);
  return static_cast<T>(loss);
}

// Sum over the batch of squared Frobenius norms of row differences.
template <typename T>
T correlation_loss(const Tensor<T>& xm, const Tensor<T>& ym) {
  check_same_shape(xm, ym, "correlation_loss");
  long double acc = 0.0;
  for (std::size_t i = 0; i < xm.numel(); ++i) {
    long double d = static_cast<long double>(xm[i]) - static_cast<long double>(ym[i]);
    acc += d * d;
  }
  return static_cast<T>(acc);
}

// d(correlation)/d(xm); the ym gradient is its negation.
template <typename T>
Tensor<T> correlation_loss_grad(const Tensor<T>& xm, const Tensor<T>& ym) {
  check_same_shape(xm, ym, "correlation_loss_grad");
  Tensor<T> g(xm.shape());
  for (std::size_t i = 0; i < xm.numel(); ++i) g[i] = T(2) * (xm[i] - ym[i]);
  return g;
}

}  // namespace hfr::nn
