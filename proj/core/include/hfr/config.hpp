#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace hfr {

struct DataConfig {
  int num_ids = 20;
  int samples_per_id = 10;
  std::array<double, 3> split{0.7, 0.1, 0.2};
  int canvas = 192;
  double noise = 0.01;
};

struct PreprocessConfig {
  double iod = 50.0;      // inter-ocular distance after cropping
  double eye_row = 48.0;  // eye-center row in the 128x128 crop
  int out_size = 128;
};

struct GanSection {
  double lr = 1e-4;
  double l1_weight = 500.0;
  int epochs = 30;
  int batch_size = 16;
  double width_scale = 1.0;
  double dropout = 0.5;
  double beta2 = 0.999;
  double momentum_start = 0.5;
  double momentum_after = 0.9;
  int momentum_switch_epoch = 10;
  std::string d_optimizer = "adam";  // or "sgd"
  std::string mode = "joint";        // joint | l1_only | adv_only
};

struct UnimodalSection {
  double lr = 1.0;
  double decay_factor = 5.0;
  int decay_period = 10;
  double momentum_start = 0.5;
  double momentum_after = 0.9;
  int momentum_switch_epoch = 10;
  int epochs = 40;
  int batch_size = 32;
  double width_scale = 1.0;
  double holdout_fraction = 0.2;  // per-identity validation carve-out
};

struct FinetuneSection {
  double lr = 1e-3;  // constant
  int epochs = 20;
  int batch_size = 32;
};

struct CrossmodalSection {
  double correlation_weight = 0.6;  // lambda
  double lr = 1e-3;
  int epochs = 30;
  int batch_size = 32;
  double momentum_start = 0.5;
  double momentum_after = 0.9;
  int momentum_switch_epoch = 10;
  bool freeze_streams = true;
  bool correlation_only = false;
  int shared_dim = 4096;
};

struct EvaluateSection {
  std::string protocol = "huang";  // huang | wang | jin | path to custom .json
  double gallery_fraction = 0.5;
  bool dump_scores = false;
};

// Every hyperparameter with its published default; unknown keys are
// rejected on load and every artifact embeds hash().
struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::string out_dir = "out";
  DataConfig data;
  PreprocessConfig preprocess;
  GanSection gan;
  UnimodalSection unimodal;
  FinetuneSection finetune;
  CrossmodalSection crossmodal;
  EvaluateSection evaluate;

  void validate() const;       // throws ConfigError naming the offending key
  std::string hash() const;    // 16-hex-digit content hash
};

ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);
void save_config(const ExperimentConfig& cfg, const std::string& path);

}  // namespace hfr
