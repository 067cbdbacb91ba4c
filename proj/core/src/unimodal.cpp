#include "hfr/unimodal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hfr/errors.hpp"

namespace hfr {

namespace {

Tensor<float> stack_batch(const std::vector<LabeledImage>& data,
                          const std::vector<std::size_t>& idx, std::size_t begin,
                          std::size_t end, std::vector<int>* labels) {
  const Tensor<float>& first = data[idx[begin]].image;
  const std::size_t c = first.dim(0), h = first.dim(1), w = first.dim(2);
  Tensor<float> batch({end - begin, c, h, w});
  for (std::size_t i = begin; i < end; ++i) {
    const LabeledImage& s = data[idx[i]];
    std::copy(s.image.data(), s.image.data() + s.image.numel(),
              batch.data() + (i - begin) * c * h * w);
    if (labels) labels->push_back(s.label);
  }
  return batch;
}

std::vector<Tensor<float>> snapshot(const nn::ParamRegistry<float>& reg) {
  std::vector<Tensor<float>> out;
  out.reserve(reg.size());
  for (const auto& p : reg) out.push_back(*p.value);
  return out;
}

void restore(nn::ParamRegistry<float>& reg, const std::vector<Tensor<float>>& snap) {
  for (std::size_t i = 0; i < reg.size(); ++i) *reg[i].value = snap[i];
}

UnimodalTrainReport run_training(CcpNetwork<float>& net,
                                 const std::vector<LabeledImage>& train_set,
                                 const std::vector<LabeledImage>& val_set,
                                 const nn::TrainSchedule& sched, std::uint64_t seed) {
  sched.validate();
  if (train_set.empty()) throw InvalidInputError("train_unimodal: empty training set");
  for (const auto& s : train_set)
    if (s.label < 0 || s.label >= net.num_classes())
      throw InvalidInputError("train_unimodal: label out of range");

  nn::ParamRegistry<float> params;
  net.register_params(params, "ccp");
  nn::SgdMomentum<float> opt(sched.learning_rate_at(0), sched.momentum_at(0));

  UnimodalTrainReport report;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<Tensor<float>> best;
  for (int epoch = 0; epoch < sched.epochs; ++epoch) {
    opt.set_lr(sched.learning_rate_at(epoch));
    opt.set_momentum(sched.momentum_at(epoch));
    Rng shuffle_rng(derive_seed(seed, "epoch:" + std::to_string(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    double epoch_loss = 0.0;
    std::size_t steps = 0;
    for (std::size_t at = 0; at < order.size(); at += sched.batch_size) {
      std::size_t end = std::min(order.size(), at + sched.batch_size);
      std::vector<int> labels;
      Tensor<float> batch = stack_batch(train_set, order, at, end, &labels);
      Tensor<float> logits = net.forward(batch, true);
      Tensor<float> grad;
      float loss = nn::softmax_cross_entropy(logits, labels, nn::Reduction::kMean, &grad);
      if (!std::isfinite(loss))
        throw TrainingDivergedError("train_unimodal: non-finite loss at epoch " +
                                    std::to_string(epoch) + " (lr " +
                                    std::to_string(opt.lr()) + ")");
      nn::zero_grads(params);
      net.backward(grad);
      opt.step(params);
      epoch_loss += loss;
      ++steps;
    }
    report.train_loss.push_back(epoch_loss / static_cast<double>(steps));

    if (!val_set.empty()) {
      double acc = classification_accuracy(net, val_set, sched.batch_size);
      report.val_accuracy.push_back(acc);
      if (acc > report.best_accuracy || report.best_epoch < 0) {
        report.best_accuracy = acc;
        report.best_epoch = epoch;
        best = snapshot(params);
      }
    }
  }
  if (!best.empty()) restore(params, best);
  return report;
}

}  // namespace

UnimodalTrainReport train_unimodal(CcpNetwork<float>& net,
                                   const std::vector<LabeledImage>& train_set,
                                   const std::vector<LabeledImage>& val_set,
                                   const nn::TrainSchedule& sched, std::uint64_t seed) {
  return run_training(net, train_set, val_set, sched, seed);
}

UnimodalTrainReport finetune(CcpNetwork<float>& net,
                             const std::vector<LabeledImage>& train_set,
                             const std::vector<LabeledImage>& val_set,
                             int num_classes, const nn::TrainSchedule& sched,
                             std::uint64_t seed) {
  if (!train_set.empty() && train_set.front().image.dim(0) !=
                                net.config().in_ch)
    throw InvalidInputError("finetune: channel mismatch between net and data");
  Rng rng(derive_seed(seed, "finetune-head"));
  net.replace_head(num_classes, rng);
  return run_training(net, train_set, val_set, sched, seed);
}

Tensor<float> extract_features(CcpNetwork<float>& net,
                               const std::vector<const Tensor<float>*>& images,
                               std::size_t batch_size) {
  if (images.empty()) throw InvalidInputError("extract_features: no images");
  const std::size_t dim = net.feature_dim();
  Tensor<float> out({images.size(), dim});
  const std::size_t c = images.front()->dim(0), h = images.front()->dim(1),
                    w = images.front()->dim(2);
  for (std::size_t at = 0; at < images.size(); at += batch_size) {
    std::size_t end = std::min(images.size(), at + batch_size);
    Tensor<float> batch({end - at, c, h, w});
    for (std::size_t i = at; i < end; ++i) {
      if (images[i]->ndim() != 3 || images[i]->dim(0) != c)
        throw ShapeError("extract_features: inconsistent image shapes");
      std::copy(images[i]->data(), images[i]->data() + images[i]->numel(),
                batch.data() + (i - at) * c * h * w);
    }
    Tensor<float> feats = net.forward_features(batch, false);
    std::copy(feats.data(), feats.data() + feats.numel(), out.data() + at * dim);
  }
  return out;
}

double classification_accuracy(CcpNetwork<float>& net,
                               const std::vector<LabeledImage>& data,
                               std::size_t batch_size) {
  if (data.empty()) return 0.0;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t hits = 0;
  for (std::size_t at = 0; at < data.size(); at += batch_size) {
    std::size_t end = std::min(data.size(), at + batch_size);
    Tensor<float> batch = stack_batch(data, order, at, end, nullptr);
    Tensor<float> logits = net.forward(batch, false);
    const std::size_t classes = logits.dim(1);
    for (std::size_t i = 0; i < end - at; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < classes; ++j)
        if (logits.at2(i, j) > logits.at2(i, best)) best = j;
      if (static_cast<int>(best) == data[at + i].label) ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

Tensor<float> to_grayscale(const Tensor<float>& rgb) {
  if (rgb.ndim() != 3 || rgb.dim(0) != 3)
    throw ShapeError("to_grayscale: expected {3,H,W}");
  Tensor<float> gray({1, rgb.dim(1), rgb.dim(2)});
  const std::size_t plane = rgb.dim(1) * rgb.dim(2);
  for (std::size_t i = 0; i < plane; ++i)
    gray[i] = 0.299f * rgb[i] + 0.587f * rgb[plane + i] + 0.114f * rgb[2 * plane + i];
  return gray;
}

}  // namespace hfr
