#pragma once

#include <string>
#include <vector>

#include "hfr/nn/init.hpp"
#include "hfr/nn/layers.hpp"
#include "hfr/nn/losses.hpp"
#include "hfr/nn/optim.hpp"
#include "hfr/tensor.hpp"
#include "hfr/unimodal.hpp"

namespace hfr {

struct HfrLossReport {
  double softmax_term = 0.0;
  double correlation_term = 0.0;  // unweighted sum of squared distances
  double total = 0.0;             // softmax + lambda * correlation
};

struct CrossModalHeadConfig {
  std::size_t feature_dim = 4096;
  std::size_t shared_dim = 4096;  // square maps by default
  int num_classes = 2;
};

// The shared space: two linear maps over the per-modality features plus one
// classifier on the averaged mapped feature.
template <typename T>
class CrossModalHead {
 public:
  explicit CrossModalHead(const CrossModalHeadConfig& cfg = {})
      : cfg_(cfg),
        map_x_(cfg.feature_dim, cfg.shared_dim, /*with_bias=*/false),
        map_y_(cfg.feature_dim, cfg.shared_dim, /*with_bias=*/false),
        classifier_(cfg.shared_dim, static_cast<std::size_t>(cfg.num_classes)) {}

  const CrossModalHeadConfig& config() const { return cfg_; }

  // Identity plus small noise keeps the pre-trained feature geometry while
  // breaking the symmetry between the two maps.
  void init(Rng& rng, double noise = 1e-3) {
    if (cfg_.feature_dim == cfg_.shared_dim) {
      nn::fill_identity_noise(map_x_.weight(), noise, rng);
      nn::fill_identity_noise(map_y_.weight(), noise, rng);
    } else {
      nn::fill_normal(map_x_.weight(), 0.0, 0.02, rng);
      nn::fill_normal(map_y_.weight(), 0.0, 0.02, rng);
    }
    nn::fill_he_normal(classifier_.weight(), classifier_.in_dim(), rng);
  }

  void register_params(nn::ParamRegistry<T>& reg, const std::string& prefix = "xm") {
    map_x_.register_params(reg, prefix + "/map_x");
    map_y_.register_params(reg, prefix + "/map_y");
    classifier_.register_params(reg, prefix + "/cls");
  }

  Tensor<T> map_color(const Tensor<T>& x, bool train = false) {
    return map_x_.forward(x, train);
  }
  Tensor<T> map_depth(const Tensor<T>& y, bool train = false) {
    return map_y_.forward(y, train);
  }

  // (M_X x + M_Y y) / 2
  Tensor<T> pair_feature(const Tensor<T>& x, const Tensor<T>& y) {
    Tensor<T> xm = map_color(x);
    Tensor<T> ym = map_depth(y);
    for (std::size_t i = 0; i < xm.numel(); ++i)
      xm[i] = (xm[i] + ym[i]) / T(2);
    return xm;
  }

  // Joint objective on a feature batch. Fills parameter gradients and,
  // when requested, gradients wrt the input features (for joint stream
  // fine-tuning). correlation_only drops the softmax term from the
  // gradients (diagnostic mode that reproduces the zero-map collapse).
  HfrLossReport loss_and_grads(const Tensor<T>& x, const Tensor<T>& y,
                               const std::vector<int>& labels, double lambda,
                               bool correlation_only = false,
                               Tensor<T>* gx = nullptr, Tensor<T>* gy = nullptr) {
    if (lambda < 0.0) throw InvalidInputError("joint loss: lambda must be >= 0");
    check_same_shape(x, y, "joint loss");
    Tensor<T> xm = map_x_.forward(x, true);
    Tensor<T> ym = map_y_.forward(y, true);

    Tensor<T> f(xm.shape());
    for (std::size_t i = 0; i < f.numel(); ++i) f[i] = (xm[i] + ym[i]) / T(2);
    Tensor<T> logits = classifier_.forward(f, true);

    HfrLossReport rep;
    Tensor<T> g_logits;
    rep.softmax_term = static_cast<double>(nn::softmax_cross_entropy(
        logits, labels, nn::Reduction::kSum, &g_logits));
    rep.correlation_term = static_cast<double>(nn::correlation_loss(xm, ym));
    rep.total = (correlation_only ? 0.0 : rep.softmax_term) +
                lambda * rep.correlation_term;

    Tensor<T> g_f({f.dim(0), f.dim(1)});
    if (!correlation_only) g_f = classifier_.backward(g_logits);
    Tensor<T> g_corr = nn::correlation_loss_grad(xm, ym);

    Tensor<T> g_xm(xm.shape()), g_ym(ym.shape());
    const T lam = static_cast<T>(lambda);
    for (std::size_t i = 0; i < g_xm.numel(); ++i) {
      T base = correlation_only ? T(0) : g_f[i] / T(2);
      g_xm[i] = base + lam * g_corr[i];
      g_ym[i] = base - lam * g_corr[i];
    }
    Tensor<T> gx_local = map_x_.backward(g_xm);
    Tensor<T> gy_local = map_y_.backward(g_ym);
    if (gx) *gx = std::move(gx_local);
    if (gy) *gy = std::move(gy_local);
    return rep;
  }

  // Loss-only path for finite differences.
  HfrLossReport loss_value(const Tensor<T>& x, const Tensor<T>& y,
                           const std::vector<int>& labels, double lambda,
                           bool correlation_only = false) {
    Tensor<T> xm = map_x_.forward(x, false);
    Tensor<T> ym = map_y_.forward(y, false);
    Tensor<T> f(xm.shape());
    for (std::size_t i = 0; i < f.numel(); ++i) f[i] = (xm[i] + ym[i]) / T(2);
    Tensor<T> logits = classifier_.forward(f, false);
    HfrLossReport rep;
    rep.softmax_term = static_cast<double>(
        nn::softmax_cross_entropy(logits, labels, nn::Reduction::kSum));
    rep.correlation_term = static_cast<double>(nn::correlation_loss(xm, ym));
    rep.total = (correlation_only ? 0.0 : rep.softmax_term) +
                lambda * rep.correlation_term;
    return rep;
  }

  double map_color_norm() const { return frobenius(map_x_); }
  double map_depth_norm() const { return frobenius(map_y_); }

  nn::Linear<T>& map_x() { return map_x_; }
  nn::Linear<T>& map_y() { return map_y_; }
  nn::Linear<T>& classifier() { return classifier_; }

 private:
  static double frobenius(const nn::Linear<T>& lin) {
    long double acc = 0.0;
    const Tensor<T>& w = const_cast<nn::Linear<T>&>(lin).weight();
    for (std::size_t i = 0; i < w.numel(); ++i)
      acc += static_cast<long double>(w[i]) * static_cast<long double>(w[i]);
    return static_cast<double>(std::sqrt(acc));
  }

  CrossModalHeadConfig cfg_;
  nn::Linear<T> map_x_, map_y_, classifier_;
};

struct CrossModalTrainConfig {
  double lambda = 0.6;
  double lr = 1e-3;
  int epochs = 30;
  int batch_size = 32;
  double momentum_start = 0.5;
  double momentum_after = 0.9;
  int momentum_switch_epoch = 10;
  bool freeze_streams = true;    // frozen: head trained on cached features
  bool correlation_only = false; // diagnostic mode
  double collapse_threshold = 1e-6;
  std::uint64_t seed = 0;
};

struct CrossModalEpochLog {
  double softmax_term = 0.0;
  double correlation_term = 0.0;
  double map_color_norm = 0.0;
  double map_depth_norm = 0.0;
};

struct CrossModalTrainReport {
  std::vector<CrossModalEpochLog> epochs;
};

// Paired features with one label per pair.
struct FeaturePairSet {
  Tensor<float> color_features;  // {N,feature_dim}
  Tensor<float> depth_features;  // {N,feature_dim}
  std::vector<int> labels;
};

// Trains the head on frozen pre-trained features. Raises a degenerate
// mapping error when both map norms collapse below the threshold.
CrossModalTrainReport train_crossmodal_head(CrossModalHead<float>& head,
                                            const FeaturePairSet& pairs,
                                            const CrossModalTrainConfig& cfg);

// Joint mode: back-propagates the joint loss into both streams as well,
// updating them at the same rate.
CrossModalTrainReport train_crossmodal_joint(CrossModalHead<float>& head,
                                             CcpNetwork<float>& color_stream,
                                             CcpNetwork<float>& depth_stream,
                                             const std::vector<LabeledImage>& color_images,
                                             const std::vector<LabeledImage>& depth_images,
                                             const CrossModalTrainConfig& cfg);

// The full two-stream model.
struct CrossModalModel {
  CcpNetwork<float> color_stream;
  CcpNetwork<float> depth_stream;
  CrossModalHead<float> head;

  CrossModalModel(const CcpConfig& color_cfg, const CcpConfig& depth_cfg,
                  const CrossModalHeadConfig& head_cfg)
      : color_stream(color_cfg), depth_stream(depth_cfg), head(head_cfg) {}
};

// (M_X x + M_Y y)/2 for one normalized image pair; result is {1, shared_dim}.
Tensor<float> extract_pair_feature(CrossModalModel& model, const Tensor<float>& color,
                                   const Tensor<float>& depth);

// One modality's mapped feature alone. Accepts "color"/"2D" and
// "depth"/"2.5D"; anything else is an invalid modality tag.
Tensor<float> extract_single(CrossModalModel& model, const Tensor<float>& img,
                             const std::string& modality);

}  // namespace hfr
