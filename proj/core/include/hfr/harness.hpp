#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hfr/config.hpp"
#include "hfr/manifest.hpp"
#include "hfr/matching.hpp"
#include "hfr/range_pipeline.hpp"
#include "hfr/tensor.hpp"

namespace hfr {

enum class Stage {
  kSynth,
  kPreprocess,
  kTrainGan,
  kTrainUnimodalColor,
  kTrainUnimodalDepth,
  kFinetune,
  kTrainCrossmodal,
  kEvaluate,
};

// Canonical dependency order.
const std::vector<Stage>& all_stages();
std::string stage_name(Stage s);
Stage stage_from_name(const std::string& name);

struct StageRecord {
  std::string stage;
  std::string config_hash;
  std::uint64_t seed = 0;
  bool skipped = false;
  double wall_seconds = 0.0;
  std::map<std::string, double> metrics;
  std::map<std::string, std::string> artifacts;  // path -> content id
};

struct RunRecord {
  std::vector<StageRecord> stages;
};

// Training-split channel means persisted next to the processed data.
struct DatasetStats {
  ChannelStats color;  // 3 values
  ChannelStats gray;   // 1 value (luma of the color means)
  ChannelStats depth;  // 1 value
  std::string config_hash;
};

void save_stats(const std::string& path, const DatasetStats& stats);
DatasetStats load_stats(const std::string& path);

// Row-major float32 feature matrix with a JSON sidecar carrying ids and the
// producing config hash (<bin path> + ".json").
struct FeatureFile {
  Tensor<float> features;  // {N,D}
  std::vector<int> labels;
  std::vector<std::string> keys;  // sample identifiers (color paths)
  std::string modality;
  std::string config_hash;
};

void save_features(const std::string& bin_path, const FeatureFile& file);
FeatureFile load_features(const std::string& bin_path);

// Protocol resolution: a built-in name or a path to a JSON file with
// {"name":..., "channels":["2D","2.5D","2D/2.5D"], "gallery_fraction":...}.
ProtocolConfig load_protocol(const std::string& name_or_path);

// Single-process orchestrator. Each stage persists its outputs plus a stamp
// carrying the config hash; with resume enabled a stage whose stamp matches
// the current hash is never recomputed.
class Pipeline {
 public:
  explicit Pipeline(ExperimentConfig cfg);

  RunRecord run(const std::vector<Stage>& stages, bool resume);
  StageRecord run_stage(Stage stage, bool resume);

  const ExperimentConfig& config() const { return cfg_; }

  std::string raw_dir() const;
  std::string processed_dir() const;
  std::string ckpt_dir() const;
  std::string curves_dir() const;
  std::string reports_dir() const;
  std::string stats_path() const;
  std::string gan_g_ckpt() const;
  std::string gan_d_ckpt() const;
  std::string color_ckpt() const;
  std::string gray_ckpt() const;
  std::string depth_ft_ckpt() const;
  std::string crossmodal_ckpt() const;
  std::string run_record_path() const;

  std::uint64_t stage_seed(Stage stage) const;

 private:
  StageRecord do_synth();
  StageRecord do_preprocess();
  StageRecord do_train_gan();
  StageRecord do_train_unimodal(bool color_stream);
  StageRecord do_finetune();
  StageRecord do_train_crossmodal();
  StageRecord do_evaluate();

  void require(Stage dependent, Stage producer) const;
  bool stage_fresh(Stage stage) const;
  void write_stamp(Stage stage, StageRecord& record) const;
  void append_record(const StageRecord& record) const;

  ExperimentConfig cfg_;
};

// Rank-1 evaluation of two precomputed feature files (one score channel).
// Files produced under different configurations are refused.
double evaluate_feature_files(const std::string& probe_bin,
                              const std::string& gallery_bin);

}  // namespace hfr
