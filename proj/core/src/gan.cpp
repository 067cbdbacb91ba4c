#include "hfr/gan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "hfr/errors.hpp"

namespace hfr {

namespace {

Tensor<float> stack(const std::vector<Tensor<float>>& images,
                    const std::vector<std::size_t>& order, std::size_t begin,
                    std::size_t end) {
  const Tensor<float>& first = images[order[begin]];
  Tensor<float> batch({end - begin, first.dim(0), first.dim(1), first.dim(2)});
  const std::size_t stride = first.numel();
  for (std::size_t i = begin; i < end; ++i)
    std::copy(images[order[i]].data(), images[order[i]].data() + stride,
              batch.data() + (i - begin) * stride);
  return batch;
}

}  // namespace

GanTrainer::GanTrainer(GeneratorNet<float> gen, DiscriminatorNet<float> dis,
                       const GanTrainConfig& cfg)
    : cfg_(cfg), gen_(std::move(gen)), dis_(std::move(dis)),
      opt_g_(cfg.lr, cfg.momentum_start, cfg.beta2),
      opt_d_adam_(cfg.lr, cfg.momentum_start, cfg.beta2),
      opt_d_sgd_(cfg.lr, cfg.momentum_start),
      dropout_rng_(derive_seed(cfg.seed, "gan-dropout")) {
  if (cfg_.d_optimizer != "adam" && cfg_.d_optimizer != "sgd")
    throw ConfigError("GanTrainer: d_optimizer must be adam or sgd");
  if (!cfg_.use_adversarial && !cfg_.use_l1)
    throw ConfigError("GanTrainer: at least one loss term must be enabled");
  gen_.register_params(g_params_, "g");
  dis_.register_params(d_params_, "d");
}

void GanTrainer::set_epoch(int epoch) {
  epoch_ = epoch;
  double m = epoch < cfg_.momentum_switch_epoch ? cfg_.momentum_start
                                                : cfg_.momentum_after;
  opt_g_.set_beta1(m);
  opt_d_adam_.set_beta1(m);
  opt_d_sgd_.set_momentum(m);
}

GanLossReport GanTrainer::train_step(const Tensor<float>& color_batch,
                                     const Tensor<float>& depth_batch) {
  GanLossReport rep;

  if (cfg_.use_adversarial) {
    // discriminator ascent on a detached fake
    Tensor<float> fake = gen_.forward(color_batch, true, &dropout_rng_, false);
    nn::zero_grads(d_params_);
    rep.loss_d = static_cast<double>(
        gan_d_loss_and_grads(dis_, depth_batch, fake, color_batch));
    if (cfg_.d_optimizer == "adam")
      opt_d_adam_.step(d_params_);
    else
      opt_d_sgd_.step(d_params_);
  }

  nn::zero_grads(g_params_);
  GanLossReport g_rep = gan_g_loss_and_grads(
      gen_, dis_, color_batch, depth_batch, cfg_.l1_weight, cfg_.use_adversarial,
      cfg_.use_l1, true, &dropout_rng_);
  opt_g_.step(g_params_);

  rep.loss_g_adv = g_rep.loss_g_adv;
  rep.loss_g_l1 = g_rep.loss_g_l1;
  rep.loss_g_total = g_rep.loss_g_total;
  if (!std::isfinite(rep.loss_d) || !std::isfinite(rep.loss_g_total))
    throw TrainingDivergedError(
        "gan_train_step: non-finite loss (loss_d=" + std::to_string(rep.loss_d) +
        ", loss_g=" + std::to_string(rep.loss_g_total) + ") at epoch " +
        std::to_string(epoch_));
  return rep;
}

std::vector<GanLossReport> GanTrainer::train(const FacePairSet& data,
                                             const std::string& loss_csv_path) {
  if (data.colors.empty() || data.colors.size() != data.depths.size())
    throw InvalidInputError("GanTrainer: empty or misaligned pair set");

  std::ofstream csv;
  if (!loss_csv_path.empty()) {
    csv.open(loss_csv_path);
    if (!csv) throw IoError("GanTrainer: cannot open " + loss_csv_path);
    csv << "epoch,loss_D,loss_G_adv,loss_G_L1\n";
  }

  std::vector<GanLossReport> history;
  std::vector<std::size_t> order(data.colors.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    set_epoch(epoch);
    Rng shuffle_rng(derive_seed(cfg_.seed, "gan-epoch:" + std::to_string(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    GanLossReport mean;
    std::size_t steps = 0;
    for (std::size_t at = 0; at < order.size(); at += cfg_.batch_size) {
      std::size_t end = std::min(order.size(),
                                 at + static_cast<std::size_t>(cfg_.batch_size));
      GanLossReport r = train_step(stack(data.colors, order, at, end),
                                   stack(data.depths, order, at, end));
      mean.loss_d += r.loss_d;
      mean.loss_g_adv += r.loss_g_adv;
      mean.loss_g_l1 += r.loss_g_l1;
      mean.loss_g_total += r.loss_g_total;
      ++steps;
    }
    mean.loss_d /= static_cast<double>(steps);
    mean.loss_g_adv /= static_cast<double>(steps);
    mean.loss_g_l1 /= static_cast<double>(steps);
    mean.loss_g_total /= static_cast<double>(steps);
    history.push_back(mean);
    if (csv.is_open())
      csv << epoch << "," << mean.loss_d << "," << mean.loss_g_adv << ","
          << mean.loss_g_l1 << "\n";
  }
  return history;
}

std::vector<Tensor<float>> reconstruct(GeneratorNet<float>& gen,
                                       const std::vector<const Tensor<float>*>& colors,
                                       std::size_t batch_size,
                                       ReconstructReport* report) {
  if (colors.empty()) throw InvalidInputError("reconstruct: no inputs");

  // Mean-subtracted inputs go negative somewhere; an all-nonnegative batch
  // with a wide range looks like raw images.
  float lo = colors.front()->vec().front(), hi = lo;
  for (const auto* img : colors)
    for (float v : img->vec()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (report) report->unnormalized_input_warning = lo >= 0.0f && hi > 0.75f;

  std::vector<Tensor<float>> out;
  out.reserve(colors.size());
  const std::size_t c = colors.front()->dim(0), h = colors.front()->dim(1),
                    w = colors.front()->dim(2);
  for (std::size_t at = 0; at < colors.size(); at += batch_size) {
    std::size_t end = std::min(colors.size(), at + batch_size);
    Tensor<float> batch({end - at, c, h, w});
    for (std::size_t i = at; i < end; ++i)
      std::copy(colors[i]->data(), colors[i]->data() + colors[i]->numel(),
                batch.data() + (i - at) * c * h * w);
    Tensor<float> depth = gen.forward(batch, false);
    const std::size_t plane = depth.dim(2) * depth.dim(3);
    for (std::size_t i = at; i < end; ++i) {
      Tensor<float> single({1, depth.dim(2), depth.dim(3)});
      std::copy(depth.data() + (i - at) * plane, depth.data() + (i - at + 1) * plane,
                single.data());
      out.push_back(std::move(single));
    }
  }
  return out;
}

}  // namespace hfr
