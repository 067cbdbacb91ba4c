#pragma once

#include <map>
#include <string>
#include <vector>

#include "hfr/tensor.hpp"

namespace hfr {

// Probe x gallery similarity matrix. Rows follow probe order, columns
// gallery order; ids are identity labels.
struct ScoreMatrix {
  Tensor<float> values;  // {P,G}
  std::vector<int> probe_ids;
  std::vector<int> gallery_ids;
  std::string modality;  // "2D", "2.5D", "2D/2.5D", "fused"
  bool normalized = false;

  std::size_t probes() const { return values.dim(0); }
  std::size_t gallery() const { return values.dim(1); }
  void validate() const;
};

// a.b / (|a||b|), accumulated in double.
double cosine_score(const float* a, const float* b, std::size_t dim);
double cosine_score(const std::vector<float>& a, const std::vector<float>& b);

// All pairwise cosine scores between probe rows and gallery rows.
ScoreMatrix cosine_score_matrix(const Tensor<float>& probe_features,
                                const std::vector<int>& probe_ids,
                                const Tensor<float>& gallery_features,
                                const std::vector<int>& gallery_ids,
                                const std::string& modality);

// Whole-matrix min-max to [0,1]; order-preserving. A constant matrix has no
// order information left, so it is rejected.
ScoreMatrix normalize_scores(const ScoreMatrix& m);

// Sum-rule fusion of normalized matrices over identical probe/gallery sets.
// The result is marked unnormalized (its range is [0, k]).
ScoreMatrix fuse(const std::vector<ScoreMatrix>& matrices);

// Fraction of probes whose best-scoring gallery entry carries the probe
// identity; argmax ties break toward the lowest gallery index.
double rank1_accuracy(const ScoreMatrix& m);

// Cumulative match characteristic; element k-1 is the rank-k identification
// rate over gallery identities.
std::vector<double> cmc_curve(const ScoreMatrix& m);

struct ProtocolConfig {
  std::string name = "huang";
  bool channel_2d = true;      // probe color vs gallery color
  bool channel_2p5d = true;    // reconstructed probe depth vs gallery depth
  bool channel_cross = true;   // mapped probe color vs mapped gallery depth
  // probe depth always comes from reconstruction, never ground truth
  double gallery_fraction = 0.5;  // per-identity share of samples enrolled

  void validate() const;
};

// Built-in protocol shapes: "huang" enables all three channels; "wang" and
// "jin" have depth-only galleries, which excludes 2D-2D matching.
ProtocolConfig protocol_by_name(const std::string& name);

struct ProtocolReport {
  std::string protocol;
  std::map<std::string, double> channel_rank1;  // keyed by modality tag
  double fused_rank1 = 0.0;
  std::size_t num_probes = 0;
  std::size_t num_gallery = 0;
  double wall_seconds = 0.0;
  std::vector<ScoreMatrix> channel_matrices;  // normalized, one per channel
  ScoreMatrix fused;
  std::vector<double> fused_cmc;
};

// Scores the enabled channels from per-channel features, normalizes each,
// fuses, and evaluates rank-1 everywhere. Feature tensors may be empty for
// disabled channels.
struct ChannelFeatures {
  Tensor<float> probe;    // {P,D}
  Tensor<float> gallery;  // {G,D}
};

ProtocolReport run_protocol_on_features(
    const ProtocolConfig& protocol, const std::vector<int>& probe_ids,
    const std::vector<int>& gallery_ids, const ChannelFeatures& color,
    const ChannelFeatures& depth, const ChannelFeatures& mapped);

}  // namespace hfr
