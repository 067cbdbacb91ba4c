#include "hfr/crossmodal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hfr/errors.hpp"
#include "hfr/rng.hpp"

namespace hfr {

namespace {

void check_collapse(const CrossModalHead<float>& head, double threshold, int epoch) {
  double nx = head.map_color_norm();
  double ny = head.map_depth_norm();
  if (nx < threshold && ny < threshold)
    throw DegenerateError(
        "train_crossmodal: both mapping norms collapsed to ~0 at epoch " +
        std::to_string(epoch) +
        " (correlation-only supervision admits the zero-map solution)");
}

Tensor<float> gather_rows(const Tensor<float>& m, const std::vector<std::size_t>& order,
                          std::size_t begin, std::size_t end) {
  const std::size_t d = m.dim(1);
  Tensor<float> out({end - begin, d});
  for (std::size_t i = begin; i < end; ++i)
    std::copy(m.data() + order[i] * d, m.data() + (order[i] + 1) * d,
              out.data() + (i - begin) * d);
  return out;
}

}  // namespace

CrossModalTrainReport train_crossmodal_head(CrossModalHead<float>& head,
                                            const FeaturePairSet& pairs,
                                            const CrossModalTrainConfig& cfg) {
  const std::size_t n = pairs.color_features.dim(0);
  if (n == 0) throw InvalidInputError("train_crossmodal: empty pair set");
  if (pairs.depth_features.dim(0) != n || pairs.labels.size() != n)
    throw ShapeError("train_crossmodal: pair set misaligned");
  if (cfg.lambda < 0.0) throw ConfigError("train_crossmodal: lambda must be >= 0");

  nn::ParamRegistry<float> params;
  head.register_params(params, "xm");
  nn::SgdMomentum<float> opt(cfg.lr, cfg.momentum_start);

  CrossModalTrainReport report;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_momentum(epoch < cfg.momentum_switch_epoch ? cfg.momentum_start
                                                       : cfg.momentum_after);
    Rng shuffle_rng(derive_seed(cfg.seed, "xm-epoch:" + std::to_string(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    CrossModalEpochLog log;
    std::size_t steps = 0;
    for (std::size_t at = 0; at < n; at += cfg.batch_size) {
      std::size_t end = std::min(n, at + static_cast<std::size_t>(cfg.batch_size));
      Tensor<float> xb = gather_rows(pairs.color_features, order, at, end);
      Tensor<float> yb = gather_rows(pairs.depth_features, order, at, end);
      std::vector<int> labels;
      for (std::size_t i = at; i < end; ++i) labels.push_back(pairs.labels[order[i]]);

      nn::zero_grads(params);
      HfrLossReport rep =
          head.loss_and_grads(xb, yb, labels, cfg.lambda, cfg.correlation_only);
      if (!std::isfinite(rep.total))
        throw TrainingDivergedError("train_crossmodal: non-finite loss at epoch " +
                                    std::to_string(epoch));
      opt.step(params);
      log.softmax_term += rep.softmax_term;
      log.correlation_term += rep.correlation_term;
      ++steps;
    }
    log.softmax_term /= static_cast<double>(steps);
    log.correlation_term /= static_cast<double>(steps);
    log.map_color_norm = head.map_color_norm();
    log.map_depth_norm = head.map_depth_norm();
    report.epochs.push_back(log);
    check_collapse(head, cfg.collapse_threshold, epoch);
  }
  return report;
}

CrossModalTrainReport train_crossmodal_joint(CrossModalHead<float>& head,
                                             CcpNetwork<float>& color_stream,
                                             CcpNetwork<float>& depth_stream,
                                             const std::vector<LabeledImage>& color_images,
                                             const std::vector<LabeledImage>& depth_images,
                                             const CrossModalTrainConfig& cfg) {
  const std::size_t n = color_images.size();
  if (n == 0 || depth_images.size() != n)
    throw InvalidInputError("train_crossmodal: misaligned image pair set");

  nn::ParamRegistry<float> params;
  head.register_params(params, "xm");
  color_stream.register_feature_params(params, "color");
  depth_stream.register_feature_params(params, "depth");
  nn::SgdMomentum<float> opt(cfg.lr, cfg.momentum_start);

  CrossModalTrainReport report;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t cc = color_images.front().image.dim(0);
  const std::size_t dc = depth_images.front().image.dim(0);
  const std::size_t h = color_images.front().image.dim(1);
  const std::size_t w = color_images.front().image.dim(2);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    opt.set_momentum(epoch < cfg.momentum_switch_epoch ? cfg.momentum_start
                                                       : cfg.momentum_after);
    Rng shuffle_rng(derive_seed(cfg.seed, "xm-epoch:" + std::to_string(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    CrossModalEpochLog log;
    std::size_t steps = 0;
    for (std::size_t at = 0; at < n; at += cfg.batch_size) {
      std::size_t end = std::min(n, at + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t bs = end - at;
      Tensor<float> xb({bs, cc, h, w}), yb({bs, dc, h, w});
      std::vector<int> labels;
      for (std::size_t i = at; i < end; ++i) {
        const auto& ci = color_images[order[i]];
        const auto& di = depth_images[order[i]];
        std::copy(ci.image.data(), ci.image.data() + ci.image.numel(),
                  xb.data() + (i - at) * cc * h * w);
        std::copy(di.image.data(), di.image.data() + di.image.numel(),
                  yb.data() + (i - at) * dc * h * w);
        labels.push_back(ci.label);
      }

      Tensor<float> xf = color_stream.forward_features(xb, true);
      Tensor<float> yf = depth_stream.forward_features(yb, true);
      nn::zero_grads(params);
      Tensor<float> gx, gy;
      HfrLossReport rep = head.loss_and_grads(xf, yf, labels, cfg.lambda,
                                              cfg.correlation_only, &gx, &gy);
      if (!std::isfinite(rep.total))
        throw TrainingDivergedError("train_crossmodal: non-finite loss at epoch " +
                                    std::to_string(epoch));
      color_stream.backward_features(gx);
      depth_stream.backward_features(gy);
      opt.step(params);
      log.softmax_term += rep.softmax_term;
      log.correlation_term += rep.correlation_term;
      ++steps;
    }
    log.softmax_term /= static_cast<double>(steps);
    log.correlation_term /= static_cast<double>(steps);
    log.map_color_norm = head.map_color_norm();
    log.map_depth_norm = head.map_depth_norm();
    report.epochs.push_back(log);
    check_collapse(head, cfg.collapse_threshold, epoch);
  }
  return report;
}

namespace {

Tensor<float> single_image_features(CcpNetwork<float>& stream, const Tensor<float>& img) {
  std::vector<const Tensor<float>*> one{&img};
  return extract_features(stream, one, 1);
}

}  // namespace

Tensor<float> extract_pair_feature(CrossModalModel& model, const Tensor<float>& color,
                                   const Tensor<float>& depth) {
  Tensor<float> xf = single_image_features(model.color_stream, color);
  Tensor<float> yf = single_image_features(model.depth_stream, depth);
  return model.head.pair_feature(xf, yf);
}

Tensor<float> extract_single(CrossModalModel& model, const Tensor<float>& img,
                             const std::string& modality) {
  if (modality == "color" || modality == "2D")
    return model.head.map_color(single_image_features(model.color_stream, img));
  if (modality == "depth" || modality == "2.5D")
    return model.head.map_depth(single_image_features(model.depth_stream, img));
  throw InvalidInputError("extract_single: unknown modality tag '" + modality + "'");
}

}  // namespace hfr
