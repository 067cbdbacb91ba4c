#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "hfr/config.hpp"
#include "hfr/harness.hpp"
#include "hfr/nn/optim.hpp"
#include "hfr/png_io.hpp"
#include "hfr/range_pipeline.hpp"
#include "hfr/rng.hpp"
#include "hfr/synth.hpp"
#include "hfr/unimodal.hpp"

using namespace hfr;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(HFR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string tiny_config_json(const std::string& out_dir, std::uint64_t seed = 11) {
  std::ostringstream os;
  os << R"({"seed": )" << seed << R"(, "out_dir": ")" << out_dir << R"(",
    "data": {"num_ids": 6, "samples_per_id": 4, "split": [0.5, 0.0, 0.5], "noise": 0.01},
    "gan": {"epochs": 1, "batch_size": 4, "width_scale": 0.0625},
    "unimodal": {"epochs": 2, "batch_size": 8, "width_scale": 0.125, "lr": 0.01,
                  "momentum_switch_epoch": 1, "holdout_fraction": 0.25},
    "finetune": {"epochs": 1, "batch_size": 8},
    "crossmodal": {"epochs": 2, "batch_size": 8, "lr": 1e-6}})";
  return os.str();
}

std::string write_config(const std::string& out_dir, std::uint64_t seed = 11) {
  std::string path = out_dir + "_config.json";
  std::ofstream out(path);
  out << tiny_config_json(out_dir, seed);
  return path;
}

}  // namespace

TEST_CASE("feature files round trip through disk") {
  Rng rng(81);
  FeatureFile file;
  file.features = Tensor<float>({3, 8});
  for (auto& v : file.features.vec()) v = static_cast<float>(rng.uniform(-1, 1));
  file.labels = {4, 5, 6};
  file.keys = {"a.png", "b.png", "c.png"};
  file.modality = "2D";
  file.config_hash = "cafebabe12345678";

  std::string path = (fs::temp_directory_path() / "hfr_feats.bin").string();
  save_features(path, file);
  FeatureFile back = load_features(path);
  CHECK(back.features.vec() == file.features.vec());
  CHECK(back.labels == file.labels);
  CHECK(back.keys == file.keys);
  CHECK(back.modality == "2D");
  CHECK(back.config_hash == file.config_hash);
}

TEST_CASE("evaluate refuses feature files from different configurations") {
  Rng rng(82);
  FeatureFile a, b;
  a.features = Tensor<float>({2, 4});
  b.features = Tensor<float>({2, 4});
  for (auto& v : a.features.vec()) v = static_cast<float>(rng.uniform(0.1, 1));
  for (auto& v : b.features.vec()) v = static_cast<float>(rng.uniform(0.1, 1));
  a.labels = b.labels = {0, 1};
  a.keys = b.keys = {"x", "y"};
  a.modality = "2D";
  b.modality = "2.5D";
  a.config_hash = "1111111111111111";
  b.config_hash = "2222222222222222";
  std::string pa = (fs::temp_directory_path() / "hfr_pa.bin").string();
  std::string pb = (fs::temp_directory_path() / "hfr_pb.bin").string();
  save_features(pa, a);
  save_features(pb, b);
  CHECK_THROWS_AS(evaluate_feature_files(pa, pb), DependencyError);

  b.config_hash = a.config_hash;
  save_features(pb, b);
  double r1 = evaluate_feature_files(pa, pb);
  CHECK(r1 >= 0.0);
  CHECK(r1 <= 1.0);
}

TEST_CASE("custom protocol files load and validate") {
  std::string path = (fs::temp_directory_path() / "hfr_protocol.json").string();
  {
    std::ofstream out(path);
    out << R"({"name": "depth-only", "channels": ["2.5D"], "gallery_fraction": 0.4})";
  }
  ProtocolConfig p = load_protocol(path);
  CHECK(p.name == "depth-only");
  CHECK(!p.channel_2d);
  CHECK(p.channel_2p5d);
  CHECK(!p.channel_cross);
  CHECK(p.gallery_fraction == 0.4);

  {
    std::ofstream out(path);
    out << R"({"channels": []})";
  }
  CHECK_THROWS_AS(load_protocol(path), ConfigError);
  CHECK_THROWS_AS(load_protocol("no-such-protocol"), ConfigError);
}

TEST_CASE("stage names round trip and stay in dependency order") {
  const auto& stages = all_stages();
  CHECK(stages.size() == 8);
  for (Stage s : stages) CHECK(stage_from_name(stage_name(s)) == s);
  CHECK_THROWS_AS(stage_from_name("warp-drive"), ConfigError);
  CHECK(stage_name(stages.front()) == "synth");
  CHECK(stage_name(stages.back()) == "evaluate");
}

TEST_CASE("evaluate without its checkpoints is a dependency error") {
  std::string out = fresh_dir("hfr_pipe_dep");
  ExperimentConfig cfg = config_from_json_text(tiny_config_json(out));
  Pipeline pipe(cfg);
  CHECK_THROWS_AS(pipe.run_stage(Stage::kEvaluate, false), DependencyError);
  CHECK_THROWS_AS(pipe.run_stage(Stage::kTrainCrossmodal, false), DependencyError);
  CHECK_THROWS_AS(pipe.run_stage(Stage::kPreprocess, false), DependencyError);
}

TEST_CASE("pipeline runs, resumes without recomputation, and logs in topological order") {
  std::string out = fresh_dir("hfr_pipe_run");
  ExperimentConfig cfg = config_from_json_text(tiny_config_json(out));
  Pipeline pipe(cfg);

  RunRecord first = pipe.run({Stage::kSynth, Stage::kPreprocess}, false);
  REQUIRE(first.stages.size() == 2);
  CHECK(first.stages[0].stage == "synth");
  CHECK(first.stages[1].stage == "preprocess");
  CHECK(!first.stages[0].skipped);

  auto manifest_id = first.stages[0].artifacts.begin()->second;
  auto mtime = fs::last_write_time(out + "/processed/manifest.jsonl");

  RunRecord second = pipe.run({Stage::kSynth, Stage::kPreprocess}, true);
  CHECK(second.stages[0].skipped);
  CHECK(second.stages[1].skipped);
  CHECK(fs::last_write_time(out + "/processed/manifest.jsonl") == mtime);
  CHECK(manifest_id != "");

  // a config change invalidates the stamps
  ExperimentConfig changed = cfg;
  changed.data.noise = 0.02;
  Pipeline pipe2(changed);
  CHECK_THROWS_AS(pipe2.run_stage(Stage::kPreprocess, true), DependencyError);

  // run_record.jsonl lists stages in execution order
  std::ifstream rec(out + "/run_record.jsonl");
  std::vector<std::string> seen;
  std::string line;
  while (std::getline(rec, line)) {
    auto at = line.find("\"stage\":\"");
    REQUIRE(at != std::string::npos);
    auto rest = line.substr(at + 9);
    seen.push_back(rest.substr(0, rest.find('"')));
  }
  REQUIRE(seen.size() == 4);
  CHECK(seen[0] == "synth");
  CHECK(seen[1] == "preprocess");
}

TEST_CASE("preprocessed pairs keep the eye geometry contract") {
  std::string out = fresh_dir("hfr_pipe_geom");
  ExperimentConfig cfg = config_from_json_text(tiny_config_json(out));
  Pipeline pipe(cfg);
  pipe.run({Stage::kSynth, Stage::kPreprocess}, false);

  Manifest m = read_manifest(out + "/processed/manifest.jsonl");
  REQUIRE(!m.samples.empty());
  for (const auto& rec : m.samples) {
    LandmarkSet lm = read_landmarks(out + "/processed/" + rec.landmarks_path);
    Landmark l = lm.left_eye_center(), r = lm.right_eye_center();
    CHECK(std::abs(std::hypot(r.x - l.x, r.y - l.y) - 50.0) < 0.5);
    CHECK(std::abs(l.y - 48.0) < 0.5);
  }
}

TEST_CASE("cli exit codes: 0 ok, 2 config, 3 dependency") {
  std::string out = fresh_dir("hfr_cli_run");
  std::string cfg_path = write_config(out, 13);

  CHECK(run_cli("--config " + cfg_path + " synth") == 0);
  CHECK(run_cli("--config " + cfg_path + " preprocess") == 0);

  // training diverged is exit 4, config error 2, dependency error 3
  std::string bad_cfg = out + "_bad.json";
  {
    std::ofstream o(bad_cfg);
    o << R"({"crossmodal": {"correlation_weight": -0.5}})";
  }
  CHECK(run_cli("--config " + bad_cfg + " synth") == 2);

  std::string empty_out = fresh_dir("hfr_cli_empty");
  std::string cfg2 = write_config(empty_out, 14);
  CHECK(run_cli("--config " + cfg2 + " evaluate") == 3);
  CHECK(run_cli("--config " + cfg2 + " finetune") == 3);

  CHECK(run_cli("--config " + cfg_path + " bogus-verb") != 0);
}

TEST_CASE("cli run-all finishes and evaluate writes the report artifacts") {
  std::string out = fresh_dir("hfr_cli_all");
  std::string cfg_path = write_config(out, 15);
  REQUIRE(run_cli("--config " + cfg_path + " run-all") == 0);
  CHECK(fs::exists(out + "/reports/evaluate_huang.json"));
  CHECK(fs::exists(out + "/reports/cmc_huang.csv"));
  CHECK(fs::exists(out + "/reports/cmc_huang.png"));
  CHECK(fs::exists(out + "/curves/gan_loss.csv"));
  CHECK(fs::exists(out + "/ckpt/gan_g.ckpt"));

  // resume skips everything
  CHECK(run_cli("--config " + cfg_path + " --resume run-all") == 0);

  // the loss CSV has the documented columns
  std::ifstream csv(out + "/curves/gan_loss.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "epoch,loss_D,loss_G_adv,loss_G_L1");

  // extract features from the color checkpoint, then single-channel evaluate
  CHECK(run_cli("--config " + cfg_path + " extract --ckpt " + out +
                "/ckpt/unimodal_color.ckpt --manifest " + out +
                "/processed/manifest.jsonl --split test --out " + out +
                "/features/test_color.bin") == 0);
  CHECK(fs::exists(out + "/features/test_color.bin.json"));
  CHECK(run_cli("evaluate --gallery " + out + "/features/test_color.bin --probe " +
                out + "/features/test_color.bin") == 0);

  // reconstruct over a directory of raw color images
  CHECK(run_cli("--config " + cfg_path + " reconstruct --ckpt " + out +
                "/ckpt/gan_g.ckpt --in " + out + "/processed --out " + out +
                "/recon --stats " + out + "/processed/stats.json") == 1);
  // (the processed dir mixes color and depth PNGs; a clean input dir works)
  std::string clean = fresh_dir("hfr_cli_recon_in");
  Manifest m = read_manifest(out + "/processed/manifest.jsonl");
  fs::copy_file(out + "/processed/" + m.samples[0].color_path,
                clean + "/img0.png");
  CHECK(run_cli("--config " + cfg_path + " reconstruct --ckpt " + out +
                "/ckpt/gan_g.ckpt --in " + clean + " --out " + out +
                "/recon --stats " + out + "/processed/stats.json") == 0);
  CHECK(fs::exists(out + "/recon/img0.png"));
}

TEST_CASE("fine-tuning the grayscale model beats training depth from scratch") {
  // synthetic stand-in corpus: grayscale pretraining transfers to depth
  std::string dir = fresh_dir("hfr_ft_vs_scratch");
  SynthConfig sc;
  sc.num_ids = 20;
  sc.samples_per_id = 4;
  sc.split = {1.0, 0.0, 0.0};
  sc.seed = 31;
  Manifest manifest = build_dataset(sc, dir);

  CropGeometry geom;
  std::string proc = fresh_dir("hfr_ft_vs_scratch_proc");
  PreprocessResult pre = preprocess_dataset(dir + "/manifest.jsonl", proc, geom);

  float gray_mean = 0.299f * pre.color_stats.mean[0] +
                    0.587f * pre.color_stats.mean[1] +
                    0.114f * pre.color_stats.mean[2];

  std::vector<LabeledImage> gray_train, gray_val, depth_train, depth_val;
  Manifest pm = read_manifest(proc + "/manifest.jsonl");
  int idx = 0;
  for (const auto& rec : pm.samples) {
    Tensor<float> color = read_png_rgb8(proc + "/" + rec.color_path);
    Tensor<float> gray = to_grayscale(color);
    for (auto& v : gray.vec()) v -= gray_mean;
    RangeImage d = read_png_gray16(proc + "/" + rec.depth_path);
    Tensor<float> depth({1, d.height(), d.width()});
    for (std::size_t i = 0; i < depth.numel(); ++i)
      depth[i] = d.values[i] - pre.depth_stats.mean[0];
    bool holdout = (idx++ % 4) == 3;  // one of four samples per identity
    (holdout ? gray_val : gray_train).push_back({std::move(gray), rec.identity});
    (holdout ? depth_val : depth_train).push_back({std::move(depth), rec.identity});
  }

  CcpConfig cc;
  cc.in_ch = 1;
  cc.num_classes = 20;
  cc.width_scale = 0.125;
  cc.in_hw = 128;

  nn::TrainSchedule pretrain_sched;
  pretrain_sched.lr = 0.01;
  pretrain_sched.epochs = 8;
  pretrain_sched.batch_size = 16;
  pretrain_sched.momentum_switch_epoch = 4;

  CcpNetwork<float> pretrained(cc);
  Rng rng(1);
  pretrained.init(rng);
  train_unimodal(pretrained, gray_train, gray_val, pretrain_sched, 2);

  nn::TrainSchedule ft_sched;
  ft_sched.lr = 1e-3;
  ft_sched.decay_period = 0;
  ft_sched.epochs = 3;
  ft_sched.batch_size = 16;
  ft_sched.momentum_switch_epoch = 3;
  ft_sched.momentum_start = 0.9;
  UnimodalTrainReport ft = finetune(pretrained, depth_train, depth_val, 20, ft_sched, 3);

  CcpNetwork<float> scratch(cc);
  Rng rng2(1);
  scratch.init(rng2);
  nn::TrainSchedule scratch_sched = ft_sched;
  scratch_sched.lr = 0.01;  // the from-scratch rate regime, equal epochs
  UnimodalTrainReport raw = train_unimodal(scratch, depth_train, depth_val,
                                           scratch_sched, 3);

  CHECK(ft.best_accuracy > raw.best_accuracy);
}
