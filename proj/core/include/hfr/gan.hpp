#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "hfr/nn/init.hpp"
#include "hfr/nn/layers.hpp"
#include "hfr/nn/losses.hpp"
#include "hfr/nn/optim.hpp"
#include "hfr/rng.hpp"
#include "hfr/tensor.hpp"

namespace hfr {

struct GeneratorConfig {
  std::size_t in_hw = 128;
  std::size_t in_ch = 3;
  std::size_t out_ch = 1;
  std::vector<std::size_t> widths = {64, 128, 256, 512, 512, 512};
  double width_scale = 1.0;
  double dropout_p = 0.5;
  int dropout_blocks = 3;  // noise enters as dropout on the first decoder blocks

  std::size_t scaled(std::size_t base) const {
    auto w = static_cast<std::size_t>(std::lround(base * width_scale));
    return w > 0 ? w : 1;
  }
};

// Test hooks: selectively silence the information paths through the network.
struct GeneratorAblation {
  bool zero_bottleneck = false;
  bool zero_skips = false;
};

// Encoder-decoder with skip connections: encoder block k's output is
// concatenated onto decoder block (blocks-k)'s input, all filters 4x4,
// stride 2, padding 1. Output maps through tanh to [-1,1] and affinely on
// to [0,1]. With dropout disabled the forward pass is a deterministic
// function of (weights, input).
template <typename T>
class GeneratorNet {
 public:
  explicit GeneratorNet(const GeneratorConfig& cfg = {}) : cfg_(cfg) {
    const std::size_t blocks = cfg_.widths.size();
    if (blocks < 2) throw ConfigError("GeneratorNet: need at least 2 blocks");
    if (cfg_.in_hw % (std::size_t(1) << blocks) != 0)
      throw ConfigError("GeneratorNet: input size not divisible by 2^blocks");

    std::size_t prev = cfg_.in_ch;
    for (std::size_t k = 0; k < blocks; ++k) {
      std::size_t w = cfg_.scaled(cfg_.widths[k]);
      enc_.emplace_back(prev, w, 4, 2, 1);
      if (k > 0) enc_act_.emplace_back(T(0.2));
      prev = w;
    }
    for (std::size_t j = 0; j < blocks; ++j) {
      // decoder block j consumes the previous decoder output concatenated
      // with encoder block (blocks-1-j)'s output; block 0 sees the bottleneck
      std::size_t in_c = j == 0 ? enc_width(blocks - 1)
                                : dec_width(j - 1) + enc_width(blocks - 1 - j);
      std::size_t out_c = j + 1 == blocks ? cfg_.out_ch : dec_width(j);
      dec_.emplace_back(in_c, out_c, 4, 2, 1);
      dec_act_.emplace_back(T(0));
      if (j < static_cast<std::size_t>(cfg_.dropout_blocks))
        drops_.emplace_back(cfg_.dropout_p);
    }
  }

  const GeneratorConfig& config() const { return cfg_; }
  std::size_t blocks() const { return cfg_.widths.size(); }

  void init(Rng& rng) {
    for (auto& c : enc_) nn::fill_normal(c.weight(), 0.0, 0.02, rng);
    for (auto& c : dec_) nn::fill_normal(c.weight(), 0.0, 0.02, rng);
  }

  void register_params(nn::ParamRegistry<T>& reg, const std::string& prefix = "g") {
    for (std::size_t k = 0; k < enc_.size(); ++k)
      enc_[k].register_params(reg, prefix + "/enc" + std::to_string(k));
    for (std::size_t j = 0; j < dec_.size(); ++j)
      dec_[j].register_params(reg, prefix + "/dec" + std::to_string(j));
  }

  // stochastic=true activates decoder dropout (rng required then).
  Tensor<T> forward(const Tensor<T>& x, bool stochastic, Rng* rng = nullptr,
                    bool train = false, const GeneratorAblation& ablation = {}) {
    if (x.ndim() != 4 || x.dim(1) != cfg_.in_ch || x.dim(2) != cfg_.in_hw ||
        x.dim(3) != cfg_.in_hw)
      throw ShapeError("GeneratorNet: bad input " + x.shape_str());
    if (stochastic && rng == nullptr)
      throw InvalidInputError("GeneratorNet: stochastic forward needs an rng");
    const std::size_t blocks = enc_.size();
    const bool keep = train;

    std::vector<Tensor<T>> e(blocks);
    e[0] = enc_[0].forward(x, keep);
    for (std::size_t k = 1; k < blocks; ++k)
      e[k] = enc_[k].forward(enc_act_[k - 1].forward(e[k - 1], keep), keep);

    Tensor<T> h = ablation.zero_bottleneck ? Tensor<T>(e[blocks - 1].shape())
                                           : e[blocks - 1];
    for (std::size_t j = 0; j < blocks; ++j) {
      if (j > 0) {
        const Tensor<T>& skip = e[blocks - 1 - j];
        h = ablation.zero_skips
                ? nn::concat_channels(h, Tensor<T>(skip.shape()))
                : nn::concat_channels(h, skip);
      }
      h = dec_[j].forward(dec_act_[j].forward(h, keep), keep);
      if (j < drops_.size() && stochastic)
        h = drops_[j].forward(h, true, rng);
    }
    if (keep) stochastic_ = stochastic;

    Tensor<T> y = out_tanh_.forward(h, keep);
    for (auto& v : y.vec()) v = (v + T(1)) / T(2);
    return y;
  }

  // Accumulates parameter gradients; returns the gradient wrt the input.
  Tensor<T> backward(const Tensor<T>& gy) {
    const std::size_t blocks = enc_.size();
    Tensor<T> g = gy;
    for (auto& v : g.vec()) v /= T(2);  // through the [0,1] affine
    g = out_tanh_.backward(g);

    std::vector<Tensor<T>> skip_grads(blocks >= 1 ? blocks - 1 : 0);
    for (std::size_t j = blocks; j-- > 1;) {
      if (j < drops_.size() && stochastic_) g = drops_[j].backward(g);
      g = dec_act_[j].backward(dec_[j].backward(g));
      Tensor<T> g_prev, g_skip;
      nn::split_channels(g, dec_width(j - 1), g_prev, g_skip);
      skip_grads[blocks - 1 - j] = std::move(g_skip);
      g = std::move(g_prev);
    }
    if (!drops_.empty() && stochastic_) g = drops_[0].backward(g);
    g = dec_act_[0].backward(dec_[0].backward(g));

    for (std::size_t k = blocks; k-- > 1;) {
      if (k < blocks - 1) {
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += skip_grads[k][i];
      }
      g = enc_act_[k - 1].backward(enc_[k].backward(g));
    }
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += skip_grads[0][i];
    return enc_[0].backward(g);
  }

 private:
  std::size_t enc_width(std::size_t k) const { return cfg_.scaled(cfg_.widths[k]); }
  // decoder block j (j < blocks-1) emits the mirrored encoder width
  std::size_t dec_width(std::size_t j) const {
    const std::size_t blocks = cfg_.widths.size();
    return cfg_.scaled(cfg_.widths[blocks - 2 - j]);
  }

  GeneratorConfig cfg_;
  std::vector<nn::Conv2d<T>> enc_;
  std::vector<nn::LeakyRelu<T>> enc_act_;
  std::vector<nn::ConvTranspose2d<T>> dec_;
  std::vector<nn::LeakyRelu<T>> dec_act_;
  std::vector<nn::Dropout<T>> drops_;
  nn::Tanh<T> out_tanh_;
  bool stochastic_ = false;
};

struct DiscriminatorConfig {
  std::size_t in_hw = 128;
  std::size_t depth_ch = 1;
  std::size_t cond_ch = 3;
  std::vector<std::size_t> widths = {64, 128, 256};  // stride-2 blocks
  std::size_t stride1_width = 512;
  double width_scale = 1.0;

  std::size_t scaled(std::size_t base) const {
    auto w = static_cast<std::size_t>(std::lround(base * width_scale));
    return w > 0 ? w : 1;
  }
};

// Patch-level discriminator over the channel-concatenated (depth, color)
// pair: stride-2 stack, one stride-1 block, then a 1-channel logit head.
// No fully connected layers; the output stays spatial.
template <typename T>
class DiscriminatorNet {
 public:
  explicit DiscriminatorNet(const DiscriminatorConfig& cfg = {}) : cfg_(cfg) {
    std::size_t prev = cfg_.depth_ch + cfg_.cond_ch;
    for (std::size_t w : cfg_.widths) {
      convs_.emplace_back(prev, cfg_.scaled(w), 4, 2, 1);
      acts_.emplace_back(T(0.2));
      prev = cfg_.scaled(w);
    }
    convs_.emplace_back(prev, cfg_.scaled(cfg_.stride1_width), 4, 1, 1);
    acts_.emplace_back(T(0.2));
    convs_.emplace_back(cfg_.scaled(cfg_.stride1_width), 1, 4, 1, 1);
  }

  const DiscriminatorConfig& config() const { return cfg_; }

  void init(Rng& rng) {
    for (auto& c : convs_) nn::fill_normal(c.weight(), 0.0, 0.02, rng);
  }

  void register_params(nn::ParamRegistry<T>& reg, const std::string& prefix = "d") {
    for (std::size_t i = 0; i < convs_.size(); ++i)
      convs_[i].register_params(reg, prefix + "/conv" + std::to_string(i));
  }

  std::size_t patch_hw() const {
    std::size_t s = cfg_.in_hw;
    for (std::size_t i = 0; i < cfg_.widths.size(); ++i)
      s = nn::conv_out_size(s, 4, 2, 1);
    s = nn::conv_out_size(s, 4, 1, 1);
    s = nn::conv_out_size(s, 4, 1, 1);
    return s;
  }

  Tensor<T> forward(const Tensor<T>& depth, const Tensor<T>& cond, bool train) {
    if (depth.ndim() != 4 || cond.ndim() != 4 || depth.dim(0) != cond.dim(0) ||
        depth.dim(1) != cfg_.depth_ch || cond.dim(1) != cfg_.cond_ch ||
        depth.dim(2) != cond.dim(2) || depth.dim(3) != cond.dim(3))
      throw ShapeError("DiscriminatorNet: mismatched inputs " + depth.shape_str() +
                       " vs " + cond.shape_str());
    Tensor<T> h = nn::concat_channels(depth, cond);
    for (std::size_t i = 0; i + 1 < convs_.size(); ++i)
      h = acts_[i].forward(convs_[i].forward(h, train), train);
    return convs_.back().forward(h, train);
  }

  // Returns gradients wrt (depth, cond).
  std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& g_logits) {
    Tensor<T> g = convs_.back().backward(g_logits);
    for (std::size_t i = convs_.size() - 1; i-- > 0;)
      g = convs_[i].backward(acts_[i].backward(g));
    Tensor<T> g_depth, g_cond;
    nn::split_channels(g, cfg_.depth_ch, g_depth, g_cond);
    return {std::move(g_depth), std::move(g_cond)};
  }

 private:
  DiscriminatorConfig cfg_;
  std::vector<nn::Conv2d<T>> convs_;
  std::vector<nn::LeakyRelu<T>> acts_;
};

// Mean of sigmoid over the patch logit map, the image-level decision.
template <typename T>
T averaged_probability(const Tensor<T>& logits) {
  long double acc = 0.0;
  for (std::size_t i = 0; i < logits.numel(); ++i)
    acc += nn::stable_sigmoid(logits[i]);
  return static_cast<T>(acc / static_cast<long double>(logits.numel()));
}

struct GanLossReport {
  double loss_d = 0.0;
  double loss_g_adv = 0.0;
  double loss_g_l1 = 0.0;
  double loss_g_total = 0.0;
};

// One discriminator grad accumulation on a (real, fake, condition) batch.
// fake is treated as a constant. Caller zeroes grads and steps the optimizer.
template <typename T>
T gan_d_loss_and_grads(DiscriminatorNet<T>& dis, const Tensor<T>& real_depth,
                       const Tensor<T>& fake_depth, const Tensor<T>& cond) {
  Tensor<T> d_real = dis.forward(real_depth, cond, true);
  Tensor<T> d_fake_probe = dis.forward(fake_depth, cond, false);
  auto losses = nn::loss_adversarial(d_real, d_fake_probe);
  Tensor<T> g_real, g_fake;
  nn::loss_d_grads(d_real, d_fake_probe, g_real, g_fake);
  // caches hold the real pass right now; replay the fake pass afterwards
  dis.backward(g_real);
  dis.forward(fake_depth, cond, true);
  dis.backward(g_fake);
  return losses.loss_d;
}

// Generator loss (non-saturating adversarial + eta * L1) with parameter
// gradients; returns the component values. Caller zeroes grads first.
template <typename T>
GanLossReport gan_g_loss_and_grads(GeneratorNet<T>& gen, DiscriminatorNet<T>& dis,
                                   const Tensor<T>& cond, const Tensor<T>& target,
                                   double eta, bool use_adv, bool use_l1,
                                   bool stochastic, Rng* rng) {
  Tensor<T> fake = gen.forward(cond, stochastic, rng, true);
  GanLossReport rep;
  Tensor<T> g_fake(fake.shape());

  Tensor<T> d_fake = dis.forward(fake, cond, use_adv);
  rep.loss_g_adv = static_cast<double>(nn::loss_adversarial(d_fake, d_fake).loss_g_adv);
  if (use_adv) {
    auto [g_depth, g_cond] = dis.backward(nn::loss_g_adv_grad(d_fake));
    g_fake = std::move(g_depth);
  }
  rep.loss_g_l1 = static_cast<double>(nn::l1_loss(fake, target));
  if (use_l1) {
    Tensor<T> g_l1 = nn::l1_loss_grad(fake, target);
    for (std::size_t i = 0; i < g_fake.numel(); ++i)
      g_fake[i] = (use_adv ? g_fake[i] : T(0)) + static_cast<T>(eta) * g_l1[i];
  } else if (!use_adv) {
    g_fake.fill(T(0));
  }
  gen.backward(g_fake);
  rep.loss_g_total = (use_adv ? rep.loss_g_adv : 0.0) +
                     (use_l1 ? eta * rep.loss_g_l1 : 0.0);
  return rep;
}

// Loss-only evaluation matching gan_g_loss_and_grads, for finite differences.
template <typename T>
T gan_g_loss_value(GeneratorNet<T>& gen, DiscriminatorNet<T>& dis,
                   const Tensor<T>& cond, const Tensor<T>& target, double eta,
                   bool use_adv, bool use_l1) {
  Tensor<T> fake = gen.forward(cond, false);
  T loss = T(0);
  if (use_adv) {
    Tensor<T> d_fake = dis.forward(fake, cond, false);
    loss += nn::loss_adversarial(d_fake, d_fake).loss_g_adv;
  }
  if (use_l1) loss += static_cast<T>(eta) * nn::l1_loss(fake, target);
  return loss;
}

template <typename T>
T gan_d_loss_value(DiscriminatorNet<T>& dis, const Tensor<T>& real_depth,
                   const Tensor<T>& fake_depth, const Tensor<T>& cond) {
  Tensor<T> d_real = dis.forward(real_depth, cond, false);
  Tensor<T> d_fake = dis.forward(fake_depth, cond, false);
  return nn::loss_adversarial(d_real, d_fake).loss_d;
}

struct GanTrainConfig {
  double lr = 1e-4;          // shared adaptive-moment rate for G and D
  double l1_weight = 500.0;  // eta
  int epochs = 30;
  int batch_size = 16;
  double beta2 = 0.999;
  double momentum_start = 0.5;  // drives Adam beta1 / SGD momentum
  double momentum_after = 0.9;
  int momentum_switch_epoch = 10;
  bool use_adversarial = true;
  bool use_l1 = true;
  std::string d_optimizer = "adam";  // "adam" | "sgd" (see docs on the ambiguity)
  std::uint64_t seed = 0;
};

// Paired training set, already preprocessed: colors are mean-subtracted,
// depth targets stay in [0,1] to match the generator's output range.
struct FacePairSet {
  std::vector<Tensor<float>> colors;  // {3,H,W}
  std::vector<Tensor<float>> depths;  // {1,H,W}
};

// Alternating optimization: one discriminator ascent step, then one
// generator step on the joint objective. Single-writer: training mutates
// model and optimizer state.
class GanTrainer {
 public:
  GanTrainer(GeneratorNet<float> gen, DiscriminatorNet<float> dis,
             const GanTrainConfig& cfg);

  // Losses are measured before the respective parameter updates.
  GanLossReport train_step(const Tensor<float>& color_batch,
                           const Tensor<float>& depth_batch);

  // Full run; per-epoch means land in loss_csv_path when non-empty
  // (columns: epoch,loss_D,loss_G_adv,loss_G_L1).
  std::vector<GanLossReport> train(const FacePairSet& data,
                                   const std::string& loss_csv_path = "");

  void set_epoch(int epoch);

  GeneratorNet<float>& generator() { return gen_; }
  DiscriminatorNet<float>& discriminator() { return dis_; }
  const GanTrainConfig& config() const { return cfg_; }
  nn::ParamRegistry<float>& generator_params() { return g_params_; }
  nn::ParamRegistry<float>& discriminator_params() { return d_params_; }
  nn::Adam<float>& generator_optimizer() { return opt_g_; }

 private:
  GanTrainConfig cfg_;
  GeneratorNet<float> gen_;
  DiscriminatorNet<float> dis_;
  nn::ParamRegistry<float> g_params_, d_params_;
  nn::Adam<float> opt_g_, opt_d_adam_;
  nn::SgdMomentum<float> opt_d_sgd_;
  Rng dropout_rng_;
  int epoch_ = 0;
};

struct ReconstructReport {
  bool unnormalized_input_warning = false;
};

// Deterministic batched depth recovery; output order matches input order.
// Inputs that look like raw (non mean-subtracted) images trigger a warning
// in the report, not an error.
std::vector<Tensor<float>> reconstruct(GeneratorNet<float>& gen,
                                       const std::vector<const Tensor<float>*>& colors,
                                       std::size_t batch_size = 16,
                                       ReconstructReport* report = nullptr);

}  // namespace hfr
