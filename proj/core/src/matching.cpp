#include "hfr/matching.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "hfr/errors.hpp"

namespace hfr {

void ScoreMatrix::validate() const {
  if (values.ndim() != 2)
    throw ShapeError("ScoreMatrix: expected 2-d values");
  if (probe_ids.size() != values.dim(0) || gallery_ids.size() != values.dim(1))
    throw ShapeError("ScoreMatrix: id lists do not match matrix dimensions");
  if (normalized)
    for (std::size_t i = 0; i < values.numel(); ++i)
      if (values[i] < 0.0f || values[i] > 1.0f)
        throw InvalidInputError("ScoreMatrix: normalized flag with values outside [0,1]");
}

double cosine_score(const float* a, const float* b, std::size_t dim) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
    nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
  }
  if (na == 0.0 || nb == 0.0)
    throw DegenerateError("cosine_score: zero vector has no direction");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double cosine_score(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine_score: dimension mismatch");
  if (a.empty()) throw InvalidInputError("cosine_score: empty vectors");
  return cosine_score(a.data(), b.data(), a.size());
}

ScoreMatrix cosine_score_matrix(const Tensor<float>& probe_features,
                                const std::vector<int>& probe_ids,
                                const Tensor<float>& gallery_features,
                                const std::vector<int>& gallery_ids,
                                const std::string& modality) {
  const std::size_t p = probe_features.dim(0), g = gallery_features.dim(0);
  const std::size_t d = probe_features.dim(1);
  if (gallery_features.dim(1) != d)
    throw ShapeError("cosine_score_matrix: feature dimension mismatch");
  if (probe_ids.size() != p || gallery_ids.size() != g)
    throw ShapeError("cosine_score_matrix: id list size mismatch");
  ScoreMatrix m;
  m.values = Tensor<float>({p, g});
  m.probe_ids = probe_ids;
  m.gallery_ids = gallery_ids;
  m.modality = modality;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < g; ++j)
      m.values.at2(i, j) = static_cast<float>(cosine_score(
          probe_features.data() + i * d, gallery_features.data() + j * d, d));
  return m;
}

ScoreMatrix normalize_scores(const ScoreMatrix& m) {
  m.validate();
  if (m.normalized)
    throw InvalidInputError("normalize_scores: matrix already normalized");
  float lo = m.values[0], hi = m.values[0];
  for (std::size_t i = 1; i < m.values.numel(); ++i) {
    lo = std::min(lo, m.values[i]);
    hi = std::max(hi, m.values[i]);
  }
  if (!(hi > lo))
    throw DegenerateError("normalize_scores: constant matrix (max == min)");
  ScoreMatrix out = m;
  const float range = hi - lo;
  for (std::size_t i = 0; i < out.values.numel(); ++i)
    out.values[i] = (out.values[i] - lo) / range;
  out.normalized = true;
  return out;
}

ScoreMatrix fuse(const std::vector<ScoreMatrix>& matrices) {
  if (matrices.empty()) throw InvalidInputError("fuse: no matrices");
  const ScoreMatrix& first = matrices.front();
  ScoreMatrix out = first;
  out.modality = "fused";
  out.normalized = false;
  for (std::size_t k = 0; k < matrices.size(); ++k) {
    const ScoreMatrix& m = matrices[k];
    m.validate();
    if (!m.normalized)
      throw InvalidInputError("fuse: input matrix '" + m.modality +
                              "' is not normalized");
    if (m.probe_ids != first.probe_ids || m.gallery_ids != first.gallery_ids)
      throw InvalidInputError("fuse: probe/gallery id lists do not align");
    if (k == 0) continue;
    for (std::size_t i = 0; i < out.values.numel(); ++i)
      out.values[i] += m.values[i];
  }
  return out;
}

namespace {

std::size_t argmax_row(const ScoreMatrix& m, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < m.gallery(); ++j)
    if (m.values.at2(row, j) > m.values.at2(row, best)) best = j;  // ties keep lowest
  return best;
}

}  // namespace

double rank1_accuracy(const ScoreMatrix& m) {
  m.validate();
  if (m.probes() == 0 || m.gallery() == 0)
    throw InvalidInputError("rank1_accuracy: empty matrix");
  std::set<int> gallery_identities(m.gallery_ids.begin(), m.gallery_ids.end());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < m.probes(); ++i) {
    if (!gallery_identities.count(m.probe_ids[i]))
      throw ProtocolError("rank1_accuracy: probe identity " +
                          std::to_string(m.probe_ids[i]) + " absent from gallery");
    if (m.gallery_ids[argmax_row(m, i)] == m.probe_ids[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(m.probes());
}

std::vector<double> cmc_curve(const ScoreMatrix& m) {
  m.validate();
  std::set<int> gallery_identities(m.gallery_ids.begin(), m.gallery_ids.end());
  const std::size_t ranks = gallery_identities.size();
  std::vector<std::size_t> hits_at(ranks, 0);
  for (std::size_t i = 0; i < m.probes(); ++i) {
    if (!gallery_identities.count(m.probe_ids[i]))
      throw ProtocolError("cmc_curve: probe identity absent from gallery");
    // order gallery entries by descending score, lowest index first on ties
    std::vector<std::size_t> order(m.gallery());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return m.values.at2(i, a) > m.values.at2(i, b);
    });
    // rank = number of distinct identities seen before the first correct one
    std::set<int> seen;
    for (std::size_t j : order) {
      if (m.gallery_ids[j] == m.probe_ids[i]) {
        if (seen.size() < ranks) ++hits_at[seen.size()];
        break;
      }
      seen.insert(m.gallery_ids[j]);
    }
  }
  std::vector<double> cmc(ranks, 0.0);
  std::size_t acc = 0;
  for (std::size_t r = 0; r < ranks; ++r) {
    acc += hits_at[r];
    cmc[r] = static_cast<double>(acc) / static_cast<double>(m.probes());
  }
  return cmc;
}

void ProtocolConfig::validate() const {
  if (!channel_2d && !channel_2p5d && !channel_cross)
    throw ConfigError("protocol '" + name + "': no channel enabled");
  if (gallery_fraction <= 0.0 || gallery_fraction >= 1.0)
    throw ConfigError("protocol '" + name + "': gallery fraction must be in (0,1)");
}

ProtocolConfig protocol_by_name(const std::string& name) {
  ProtocolConfig p;
  p.name = name;
  if (name == "huang") {
    // gallery holds both modalities: all channels live
  } else if (name == "wang" || name == "jin") {
    p.channel_2d = false;  // depth-only gallery excludes 2D matching
  } else {
    throw ConfigError("unknown protocol '" + name + "'");
  }
  return p;
}

ProtocolReport run_protocol_on_features(
    const ProtocolConfig& protocol, const std::vector<int>& probe_ids,
    const std::vector<int>& gallery_ids, const ChannelFeatures& color,
    const ChannelFeatures& depth, const ChannelFeatures& mapped) {
  protocol.validate();
  auto t0 = std::chrono::steady_clock::now();

  ProtocolReport report;
  report.protocol = protocol.name;

  auto add_channel = [&](const ChannelFeatures& feats, const std::string& tag) {
    if (feats.probe.numel() == 0 || feats.gallery.numel() == 0)
      throw ConfigError("protocol '" + protocol.name + "': channel " + tag +
                        " requires features that were not provided");
    ScoreMatrix raw = cosine_score_matrix(feats.probe, probe_ids, feats.gallery,
                                          gallery_ids, tag);
    ScoreMatrix norm = normalize_scores(raw);
    report.channel_rank1[tag] = rank1_accuracy(norm);
    report.channel_matrices.push_back(std::move(norm));
  };

  if (protocol.channel_2d) add_channel(color, "2D");
  if (protocol.channel_2p5d) add_channel(depth, "2.5D");
  if (protocol.channel_cross) add_channel(mapped, "2D/2.5D");

  report.fused = fuse(report.channel_matrices);
  report.fused_rank1 = rank1_accuracy(report.fused);
  report.fused_cmc = cmc_curve(report.fused);
  report.num_probes = report.fused.probes();
  report.num_gallery = report.fused.gallery();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace hfr
