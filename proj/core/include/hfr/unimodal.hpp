#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hfr/image.hpp"
#include "hfr/nn/init.hpp"
#include "hfr/nn/layers.hpp"
#include "hfr/nn/losses.hpp"
#include "hfr/nn/optim.hpp"
#include "hfr/tensor.hpp"

namespace hfr {

struct CcpConfig {
  std::size_t in_ch = 3;  // 1 or 3
  int num_classes = 2;
  double width_scale = 1.0;     // scales conv widths, never the feature width
  std::size_t in_hw = 128;
  std::vector<std::size_t> widths = {32, 64, 128, 256};  // one per C-C-P block
  std::size_t feature_dim = 4096;

  std::size_t scaled(std::size_t base) const {
    auto w = static_cast<std::size_t>(std::lround(base * width_scale));
    return w > 0 ? w : 1;
  }
};

// Stacked convolution-convolution-pooling blocks (3x3 convolutions, 2x2 max
// pool) followed by the 4096-d feature layer and a replaceable classifier
// head. Feature extraction never touches the head.
template <typename T>
class CcpNetwork {
 public:
  explicit CcpNetwork(const CcpConfig& cfg = {})
      : cfg_(cfg),
        fc_(flat_dim(), cfg.feature_dim),
        head_(cfg.feature_dim, static_cast<std::size_t>(cfg.num_classes)) {
    if (cfg_.in_ch != 1 && cfg_.in_ch != 3)
      throw InvalidInputError("CcpNetwork: in_ch must be 1 or 3");
    if (cfg_.num_classes < 2)
      throw InvalidInputError("CcpNetwork: need at least 2 classes");
    if (cfg_.in_hw % (std::size_t(1) << cfg_.widths.size()) != 0)
      throw ConfigError("CcpNetwork: input size not divisible by 2^blocks");
    std::size_t prev = cfg_.in_ch;
    for (std::size_t w : cfg_.widths) {
      std::size_t ww = cfg_.scaled(w);
      convs_.emplace_back(prev, ww, 3, 1, 1);
      convs_.emplace_back(ww, ww, 3, 1, 1);
      prev = ww;
    }
    acts_.assign(convs_.size() + 1, nn::LeakyRelu<T>(T(0)));
    pools_.assign(cfg_.widths.size(), nn::MaxPool2<T>());
  }

  const CcpConfig& config() const { return cfg_; }
  std::size_t feature_dim() const { return cfg_.feature_dim; }
  int num_classes() const { return cfg_.num_classes; }

  void init(Rng& rng) {
    for (auto& c : convs_) {
      std::size_t fan_in = c.weight().dim(1) * 9;
      nn::fill_he_normal(c.weight(), fan_in, rng);
    }
    nn::fill_he_normal(fc_.weight(), fc_.in_dim(), rng);
    nn::fill_he_normal(head_.weight(), head_.in_dim(), rng);
  }

  void register_feature_params(nn::ParamRegistry<T>& reg, const std::string& prefix) {
    for (std::size_t i = 0; i < convs_.size(); ++i)
      convs_[i].register_params(reg, prefix + "/conv" + std::to_string(i));
    fc_.register_params(reg, prefix + "/fc");
  }

  void register_head_params(nn::ParamRegistry<T>& reg, const std::string& prefix) {
    head_.register_params(reg, prefix + "/head");
  }

  void register_params(nn::ParamRegistry<T>& reg, const std::string& prefix = "ccp") {
    register_feature_params(reg, prefix);
    register_head_params(reg, prefix);
  }

  // {N,C,H,W} -> {N,feature_dim}
  Tensor<T> forward_features(const Tensor<T>& x, bool train) {
    if (x.ndim() != 4 || x.dim(1) != cfg_.in_ch || x.dim(2) != cfg_.in_hw ||
        x.dim(3) != cfg_.in_hw)
      throw ShapeError("CcpNetwork: bad input " + x.shape_str());
    Tensor<T> h = x;
    for (std::size_t b = 0; b < cfg_.widths.size(); ++b) {
      h = acts_[2 * b].forward(convs_[2 * b].forward(h, train), train);
      h = acts_[2 * b + 1].forward(convs_[2 * b + 1].forward(h, train), train);
      h = pools_[b].forward(h, train);
    }
    if (train) conv_out_shape_ = h.shape();
    h = h.reshaped({h.dim(0), flat_dim()});
    return acts_.back().forward(fc_.forward(h, train), train);
  }

  Tensor<T> head_logits(const Tensor<T>& features, bool train) {
    return head_.forward(features, train);
  }

  Tensor<T> forward(const Tensor<T>& x, bool train) {
    return head_logits(forward_features(x, train), train);
  }

  // Full backward from logit gradients (head included).
  Tensor<T> backward(const Tensor<T>& g_logits) {
    return backward_features(head_.backward(g_logits));
  }

  // Backward from feature gradients, used when another model consumes the
  // features directly.
  Tensor<T> backward_features(const Tensor<T>& g_features) {
    Tensor<T> g = fc_.backward(acts_.back().backward(g_features));
    g = g.reshaped(conv_out_shape_);
    for (std::size_t b = cfg_.widths.size(); b-- > 0;) {
      g = pools_[b].backward(g);
      g = convs_[2 * b + 1].backward(acts_[2 * b + 1].backward(g));
      g = convs_[2 * b].backward(acts_[2 * b].backward(g));
    }
    return g;
  }

  // Swaps in a freshly initialized classifier; feature layers are untouched.
  void replace_head(int num_classes, Rng& rng) {
    if (num_classes < 2)
      throw InvalidInputError("replace_head: need at least 2 classes");
    cfg_.num_classes = num_classes;
    head_ = nn::Linear<T>(cfg_.feature_dim, static_cast<std::size_t>(num_classes));
    nn::fill_he_normal(head_.weight(), head_.in_dim(), rng);
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    std::size_t prev = cfg_.in_ch;
    for (std::size_t w : cfg_.widths) {
      std::size_t ww = cfg_.scaled(w);
      n += ww * prev * 9 + ww;   // first conv + bias
      n += ww * ww * 9 + ww;     // second conv + bias
      prev = ww;
    }
    n += cfg_.feature_dim * flat_dim() + cfg_.feature_dim;
    n += static_cast<std::size_t>(cfg_.num_classes) * cfg_.feature_dim +
         static_cast<std::size_t>(cfg_.num_classes);
    return n;
  }

 private:
  std::size_t flat_dim() const {
    std::size_t hw = cfg_.in_hw >> cfg_.widths.size();
    return cfg_.scaled(cfg_.widths.back()) * hw * hw;
  }

  CcpConfig cfg_;
  std::vector<nn::Conv2d<T>> convs_;
  std::vector<nn::LeakyRelu<T>> acts_;  // one per conv plus one after fc
  std::vector<nn::MaxPool2<T>> pools_;
  nn::Linear<T> fc_;
  nn::Linear<T> head_;
  std::vector<std::size_t> conv_out_shape_;
};

struct LabeledImage {
  Tensor<float> image;  // CHW, already normalized
  int label = 0;
};

struct UnimodalTrainReport {
  std::vector<double> train_loss;    // per epoch
  std::vector<double> val_accuracy;  // per epoch (empty if no val set)
  int best_epoch = -1;
  double best_accuracy = 0.0;
};

// Cross-entropy training with the momentum schedule; the network is left at
// the parameters of the best validation epoch (last epoch if no val data).
UnimodalTrainReport train_unimodal(CcpNetwork<float>& net,
                                   const std::vector<LabeledImage>& train_set,
                                   const std::vector<LabeledImage>& val_set,
                                   const nn::TrainSchedule& sched,
                                   std::uint64_t seed);

// Fine-tuning: replaces the head for the new class count and updates all
// layers at the (constant) fine-tune rate.
UnimodalTrainReport finetune(CcpNetwork<float>& net,
                             const std::vector<LabeledImage>& train_set,
                             const std::vector<LabeledImage>& val_set,
                             int num_classes, const nn::TrainSchedule& sched,
                             std::uint64_t seed);

// Deterministic batched feature extraction; row order follows input order.
Tensor<float> extract_features(CcpNetwork<float>& net,
                               const std::vector<const Tensor<float>*>& images,
                               std::size_t batch_size = 32);

double classification_accuracy(CcpNetwork<float>& net,
                               const std::vector<LabeledImage>& data,
                               std::size_t batch_size = 32);

// ITU-R 601 luma, {3,H,W} -> {1,H,W}.
Tensor<float> to_grayscale(const Tensor<float>& rgb);

}  // namespace hfr
