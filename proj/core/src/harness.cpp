#include "hfr/harness.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hfr/checkpoint.hpp"
#include "hfr/crossmodal.hpp"
#include "hfr/errors.hpp"
#include "hfr/gan.hpp"
#include "hfr/plot.hpp"
#include "hfr/png_io.hpp"
#include "hfr/rng.hpp"
#include "hfr/synth.hpp"
#include "hfr/unimodal.hpp"

namespace hfr {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages = {
      Stage::kSynth,          Stage::kPreprocess,
      Stage::kTrainGan,       Stage::kTrainUnimodalColor,
      Stage::kTrainUnimodalDepth, Stage::kFinetune,
      Stage::kTrainCrossmodal, Stage::kEvaluate,
  };
  return stages;
}

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::kSynth: return "synth";
    case Stage::kPreprocess: return "preprocess";
    case Stage::kTrainGan: return "train-gan";
    case Stage::kTrainUnimodalColor: return "train-unimodal-color";
    case Stage::kTrainUnimodalDepth: return "train-unimodal-depth";
    case Stage::kFinetune: return "finetune";
    case Stage::kTrainCrossmodal: return "train-crossmodal";
    case Stage::kEvaluate: return "evaluate";
  }
  return "?";
}

Stage stage_from_name(const std::string& name) {
  for (Stage s : all_stages())
    if (stage_name(s) == name) return s;
  throw ConfigError("unknown stage '" + name + "'");
}

void save_stats(const std::string& path, const DatasetStats& stats) {
  json j{{"color_mean", stats.color.mean},
         {"gray_mean", stats.gray.mean},
         {"depth_mean", stats.depth.mean},
         {"config_hash", stats.config_hash}};
  std::ofstream out(path);
  if (!out) throw IoError("save_stats: cannot open " + path);
  out << j.dump(2) << "\n";
}

DatasetStats load_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DependencyError("missing channel stats " + path +
                                 " (run the preprocess stage)");
  json j = json::parse(in, nullptr, /*allow_exceptions=*/true);
  DatasetStats s;
  s.color.mean = j.at("color_mean").get<std::vector<float>>();
  s.gray.mean = j.at("gray_mean").get<std::vector<float>>();
  s.depth.mean = j.at("depth_mean").get<std::vector<float>>();
  s.config_hash = j.at("config_hash").get<std::string>();
  return s;
}

void save_features(const std::string& bin_path, const FeatureFile& file) {
  auto parent = fs::path(bin_path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("save_features: cannot open " + bin_path);
  bin.write(reinterpret_cast<const char*>(file.features.data()),
            static_cast<std::streamsize>(file.features.numel() * sizeof(float)));
  json j{{"rows", file.features.dim(0)},
         {"dim", file.features.dim(1)},
         {"labels", file.labels},
         {"keys", file.keys},
         {"modality", file.modality},
         {"config_hash", file.config_hash},
         {"dtype", "float32-le-rowmajor"}};
  std::ofstream side(bin_path + ".json");
  if (!side) throw IoError("save_features: cannot open sidecar for " + bin_path);
  side << j.dump(2) << "\n";
}

FeatureFile load_features(const std::string& bin_path) {
  std::ifstream side(bin_path + ".json");
  if (!side) throw IoError("load_features: missing sidecar for " + bin_path);
  json j = json::parse(side);
  FeatureFile f;
  std::size_t rows = j.at("rows").get<std::size_t>();
  std::size_t dim = j.at("dim").get<std::size_t>();
  f.labels = j.at("labels").get<std::vector<int>>();
  f.keys = j.at("keys").get<std::vector<std::string>>();
  f.modality = j.at("modality").get<std::string>();
  f.config_hash = j.at("config_hash").get<std::string>();
  f.features = Tensor<float>({rows, dim});
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw IoError("load_features: cannot open " + bin_path);
  bin.read(reinterpret_cast<char*>(f.features.data()),
           static_cast<std::streamsize>(rows * dim * sizeof(float)));
  if (!bin) throw IoError("load_features: truncated " + bin_path);
  return f;
}

ProtocolConfig load_protocol(const std::string& name_or_path) {
  if (name_or_path == "huang" || name_or_path == "wang" || name_or_path == "jin")
    return protocol_by_name(name_or_path);
  std::ifstream in(name_or_path);
  if (!in) throw ConfigError("protocol: unknown name or unreadable file '" +
                             name_or_path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("protocol file " + name_or_path + ": " + e.what());
  }
  ProtocolConfig p;
  p.name = j.value("name", fs::path(name_or_path).stem().string());
  p.channel_2d = p.channel_2p5d = p.channel_cross = false;
  for (const auto& c : j.at("channels")) {
    std::string tag = c.get<std::string>();
    if (tag == "2D") p.channel_2d = true;
    else if (tag == "2.5D") p.channel_2p5d = true;
    else if (tag == "2D/2.5D") p.channel_cross = true;
    else throw ConfigError("protocol file " + name_or_path + ": unknown channel '" + tag + "'");
  }
  if (j.contains("gallery_fraction"))
    p.gallery_fraction = j.at("gallery_fraction").get<double>();
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t file_id(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return 0;
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string s = buf.str();
  return fnv1a64(s.data(), s.size());
}

std::string hex_id(std::uint64_t id) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id));
  return buf;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void subtract_mean(Tensor<float>& img, const ChannelStats& stats) {
  const std::size_t plane = img.dim(1) * img.dim(2);
  for (std::size_t c = 0; c < img.dim(0); ++c) {
    float m = stats.mean.at(c);
    float* p = img.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] -= m;
  }
}

Tensor<float> depth_to_tensor(const RangeImage& depth) {
  Tensor<float> t({1, depth.height(), depth.width()});
  std::copy(depth.values.data(), depth.values.data() + depth.values.numel(),
            t.data());
  return t;
}

struct SplitData {
  std::vector<Tensor<float>> colors_norm;   // mean-subtracted
  std::vector<Tensor<float>> grays_norm;    // luma, mean-subtracted
  std::vector<Tensor<float>> depths_raw;    // [0,1]
  std::vector<Tensor<float>> depths_norm;   // mean-subtracted
  std::vector<int> identities;              // raw identity labels
  std::vector<std::string> keys;            // color paths
};

SplitData load_split(const std::string& manifest_path, const std::string& split,
                     const DatasetStats& stats, bool want_gray, bool want_depth) {
  Manifest m = read_manifest(manifest_path);
  SplitData out;
  for (const auto& rec : m.samples) {
    if (rec.split != split) continue;
    Tensor<float> color = read_png_rgb8(resolve_path(manifest_path, rec.color_path));
    if (want_gray) {
      Tensor<float> gray = to_grayscale(color);
      subtract_mean(gray, stats.gray);
      out.grays_norm.push_back(std::move(gray));
    }
    subtract_mean(color, stats.color);
    out.colors_norm.push_back(std::move(color));
    if (want_depth) {
      RangeImage depth = read_png_gray16(resolve_path(manifest_path, rec.depth_path));
      Tensor<float> raw = depth_to_tensor(depth);
      Tensor<float> norm = raw;
      subtract_mean(norm, stats.depth);
      out.depths_raw.push_back(std::move(raw));
      out.depths_norm.push_back(std::move(norm));
    }
    out.identities.push_back(rec.identity);
    out.keys.push_back(rec.color_path);
  }
  return out;
}

// raw identity labels -> contiguous class indices (sorted order)
std::map<int, int> class_map(const std::vector<int>& identities) {
  std::set<int> unique(identities.begin(), identities.end());
  std::map<int, int> remap;
  int next = 0;
  for (int id : unique) remap[id] = next++;
  return remap;
}

nn::TrainSchedule schedule_from(const UnimodalSection& u) {
  nn::TrainSchedule s;
  s.lr = u.lr;
  s.decay_factor = u.decay_factor;
  s.decay_period = u.decay_period;
  s.momentum_start = u.momentum_start;
  s.momentum_after = u.momentum_after;
  s.momentum_switch_epoch = u.momentum_switch_epoch;
  s.epochs = u.epochs;
  s.batch_size = u.batch_size;
  return s;
}

void save_net_checkpoint(const std::string& path, nn::ParamRegistry<float>& params,
                         std::map<std::string, std::string> meta) {
  Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  save_params(ckpt, params);
  ckpt.save(path);
}

void check_ckpt_hash(const Checkpoint& ckpt, const std::string& path,
                     const std::string& expected) {
  auto it = ckpt.meta.find("config_hash");
  if (it == ckpt.meta.end() || it->second != expected)
    throw DependencyError("checkpoint " + path +
                          " was produced under a different configuration "
                          "(hash mismatch); re-run its stage");
}

}  // namespace

Pipeline::Pipeline(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
}

std::string Pipeline::raw_dir() const { return (fs::path(cfg_.out_dir) / "raw").string(); }
std::string Pipeline::processed_dir() const { return (fs::path(cfg_.out_dir) / "processed").string(); }
std::string Pipeline::ckpt_dir() const { return (fs::path(cfg_.out_dir) / "ckpt").string(); }
std::string Pipeline::curves_dir() const { return (fs::path(cfg_.out_dir) / "curves").string(); }
std::string Pipeline::reports_dir() const { return (fs::path(cfg_.out_dir) / "reports").string(); }
std::string Pipeline::stats_path() const { return (fs::path(processed_dir()) / "stats.json").string(); }
std::string Pipeline::gan_g_ckpt() const { return (fs::path(ckpt_dir()) / "gan_g.ckpt").string(); }
std::string Pipeline::gan_d_ckpt() const { return (fs::path(ckpt_dir()) / "gan_d.ckpt").string(); }
std::string Pipeline::color_ckpt() const { return (fs::path(ckpt_dir()) / "unimodal_color.ckpt").string(); }
std::string Pipeline::gray_ckpt() const { return (fs::path(ckpt_dir()) / "unimodal_gray.ckpt").string(); }
std::string Pipeline::depth_ft_ckpt() const { return (fs::path(ckpt_dir()) / "depth_finetuned.ckpt").string(); }
std::string Pipeline::crossmodal_ckpt() const { return (fs::path(ckpt_dir()) / "crossmodal.ckpt").string(); }
std::string Pipeline::run_record_path() const { return (fs::path(cfg_.out_dir) / "run_record.jsonl").string(); }

std::uint64_t Pipeline::stage_seed(Stage stage) const {
  return derive_seed(cfg_.seed, "stage:" + stage_name(stage));
}

void Pipeline::require(Stage dependent, Stage producer) const {
  if (!stage_fresh(producer))
    throw DependencyError("stage '" + stage_name(dependent) +
                          "' requires completed stage '" + stage_name(producer) +
                          "' (missing or stale outputs under " + cfg_.out_dir + ")");
}

bool Pipeline::stage_fresh(Stage stage) const {
  fs::path stamp = fs::path(cfg_.out_dir) / "stamps" / (stage_name(stage) + ".json");
  std::ifstream in(stamp);
  if (!in) return false;
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception&) {
    return false;
  }
  if (j.value("config_hash", "") != cfg_.hash()) return false;
  const json artifacts = j.value("artifacts", json::object());
  for (const auto& [path, id] : artifacts.items())
    if (!fs::exists(path)) return false;
  return true;
}

void Pipeline::write_stamp(Stage stage, StageRecord& record) const {
  for (auto& [path, id] : record.artifacts) id = hex_id(file_id(path));
  fs::create_directories(fs::path(cfg_.out_dir) / "stamps");
  json j{{"stage", stage_name(stage)},
         {"config_hash", cfg_.hash()},
         {"artifacts", record.artifacts}};
  std::ofstream out(fs::path(cfg_.out_dir) / "stamps" / (stage_name(stage) + ".json"));
  out << j.dump(2) << "\n";
}

void Pipeline::append_record(const StageRecord& record) const {
  fs::create_directories(cfg_.out_dir);
  std::ofstream out(run_record_path(), std::ios::app);
  json j{{"stage", record.stage},
         {"config_hash", record.config_hash},
         {"seed", record.seed},
         {"skipped", record.skipped},
         {"wall_seconds", record.wall_seconds},
         {"metrics", record.metrics},
         {"artifacts", record.artifacts}};
  out << j.dump() << "\n";
}

RunRecord Pipeline::run(const std::vector<Stage>& stages, bool resume) {
  std::set<Stage> wanted(stages.begin(), stages.end());
  RunRecord record;
  for (Stage s : all_stages()) {
    if (!wanted.count(s)) continue;
    record.stages.push_back(run_stage(s, resume));
  }
  return record;
}

StageRecord Pipeline::run_stage(Stage stage, bool resume) {
  // dependency gates
  switch (stage) {
    case Stage::kSynth:
      break;
    case Stage::kPreprocess:
      require(stage, Stage::kSynth);
      break;
    case Stage::kTrainGan:
    case Stage::kTrainUnimodalColor:
    case Stage::kTrainUnimodalDepth:
      require(stage, Stage::kPreprocess);
      break;
    case Stage::kFinetune:
      require(stage, Stage::kTrainUnimodalDepth);
      break;
    case Stage::kTrainCrossmodal:
      require(stage, Stage::kTrainUnimodalColor);
      require(stage, Stage::kFinetune);
      break;
    case Stage::kEvaluate: {
      require(stage, Stage::kPreprocess);
      ProtocolConfig p = load_protocol(cfg_.evaluate.protocol);
      p.gallery_fraction = cfg_.evaluate.gallery_fraction;
      if (p.channel_2d || p.channel_cross) require(stage, Stage::kTrainUnimodalColor);
      if (p.channel_2p5d) require(stage, Stage::kTrainGan);
      if (p.channel_2p5d || p.channel_cross) require(stage, Stage::kFinetune);
      if (p.channel_cross) require(stage, Stage::kTrainCrossmodal);
      break;
    }
  }

  if (resume && stage_fresh(stage)) {
    StageRecord rec;
    rec.stage = stage_name(stage);
    rec.config_hash = cfg_.hash();
    rec.seed = stage_seed(stage);
    rec.skipped = true;
    append_record(rec);
    return rec;
  }

  StageRecord rec;
  switch (stage) {
    case Stage::kSynth: rec = do_synth(); break;
    case Stage::kPreprocess: rec = do_preprocess(); break;
    case Stage::kTrainGan: rec = do_train_gan(); break;
    case Stage::kTrainUnimodalColor: rec = do_train_unimodal(true); break;
    case Stage::kTrainUnimodalDepth: rec = do_train_unimodal(false); break;
    case Stage::kFinetune: rec = do_finetune(); break;
    case Stage::kTrainCrossmodal: rec = do_train_crossmodal(); break;
    case Stage::kEvaluate: rec = do_evaluate(); break;
  }
  write_stamp(stage, rec);
  append_record(rec);
  return rec;
}

StageRecord Pipeline::do_synth() {
  auto t0 = std::chrono::steady_clock::now();
  StageRecord rec;
  rec.stage = stage_name(Stage::kSynth);
  rec.config_hash = cfg_.hash();
  rec.seed = stage_seed(Stage::kSynth);

  SynthConfig sc;
  sc.num_ids = cfg_.data.num_ids;
  sc.samples_per_id = cfg_.data.samples_per_id;
  sc.split = cfg_.data.split;
  sc.seed = rec.seed;
  sc.canvas = static_cast<std::size_t>(cfg_.data.canvas);
  sc.noise = cfg_.data.noise;
  Manifest manifest = build_dataset(sc, raw_dir());

  rec.metrics["samples"] = static_cast<double>(manifest.samples.size());
  rec.artifacts[(fs::path(raw_dir()) / "manifest.jsonl").string()] = "";
  rec.wall_seconds = seconds_since(t0);
  return rec;
}

StageRecord Pipeline::do_preprocess() {
  auto t0 = std::chrono::steady_clock::now();
  StageRecord rec;
  rec.stage = stage_name(Stage::kPreprocess);
  rec.config_hash = cfg_.hash();
  rec.seed = stage_seed(Stage::kPreprocess);

  CropGeometry geom;
  geom.out_size = static_cast<std::size_t>(cfg_.preprocess.out_size);
  geom.target_iod_px = cfg_.preprocess.iod;
  geom.eye_row = cfg_.preprocess.eye_row;
  PreprocessResult result = preprocess_dataset(
      (fs::path(raw_dir()) / "manifest.jsonl").string(), processed_dir(), geom);

  DatasetStats stats;
  stats.color = result.color_stats;
  stats.depth = result.depth_stats;
  stats.gray.mean = {0.299f * result.color_stats.mean[0] +
                     0.587f * result.color_stats.mean[1] +
                     0.114f * result.color_stats.mean[2]};
  stats.config_hash = cfg_.hash();
  save_stats(stats_path(), stats);

  rec.metrics["samples"] = static_cast<double>(result.manifest.samples.size());
  rec.artifacts[(fs::path(processed_dir()) / "manifest.jsonl").string()] = "";
  rec.artifacts[stats_path()] = "";
  rec.wall_seconds = seconds_since(t0);
  return rec;
}

StageRecord Pipeline::do_train_gan() {
  auto t0 = std::chrono::steady_clock::now();
  StageRecord rec;
  rec.stage = stage_name(Stage::kTrainGan);
  rec.config_hash = cfg_.hash();
  rec.seed = stage_seed(Stage::kTrainGan);

  DatasetStats stats = load_stats(stats_path());
  SplitData train = load_split((fs::path(processed_dir()) / "manifest.jsonl").string(),
                               "train", stats, false, true);
  if (train.colors_norm.empty())
    throw DependencyError("train-gan: processed training split is empty");

  GeneratorConfig gcfg;
  gcfg.in_hw = static_cast<std::size_t>(cfg_.preprocess.out_size);
  gcfg.width_scale = cfg_.gan.width_scale;
  gcfg.dropout_p = cfg_.gan.dropout;
  DiscriminatorConfig dcfg;
  dcfg.in_hw = gcfg.in_hw;
  dcfg.width_scale = cfg_.gan.width_scale;

  GeneratorNet<float> gen(gcfg);
  DiscriminatorNet<float> dis(dcfg);
  Rng init_rng(derive_seed(rec.seed, "init"));
  gen.init(init_rng);
  dis.init(init_rng);

  GanTrainConfig tc;
  tc.lr = cfg_.gan.lr;
  tc.l1_weight = cfg_.gan.l1_weight;
  tc.epochs = cfg_.gan.epochs;
  tc.batch_size = cfg_.gan.batch_size;
  tc.beta2 = cfg_.gan.beta2;
  tc.momentum_start = cfg_.gan.momentum_start;
  tc.momentum_after = cfg_.gan.momentum_after;
  tc.momentum_switch_epoch = cfg_.gan.momentum_switch_epoch;
  tc.use_adversarial = cfg_.gan.mode != "l1_only";
  tc.use_l1 = cfg_.gan.mode != "adv_only";
  tc.d_optimizer = cfg_.gan.d_optimizer;
  tc.seed = derive_seed(rec.seed, "train");

  GanTrainer trainer(std::move(gen), std::move(dis), tc);
  FacePairSet data;
  data.colors = std::move(train.colors_norm);
  data.depths = std::move(train.depths_raw);
  fs::create_directories(curves_dir());
  std::string csv = (fs::path(curves_dir()) / "gan_loss.csv").string();
  auto history = trainer.train(data, csv);

  fs::create_directories(ckpt_dir());
  std::map<std::string, std::string> meta{
      {"kind", "generator"},
      {"config_hash", cfg_.hash()},
      {"seed", std::to_string(tc.seed)},
      {"epoch", std::to_string(cfg_.gan.epochs)},
      {"in_hw", std::to_string(gcfg.in_hw)},
      {"width_scale", std::to_string(cfg_.gan.width_scale)},
      {"dropout", std::to_string(cfg_.gan.dropout)},
  };
  {
    Checkpoint ckpt;
    ckpt.meta = meta;
    save_params(ckpt, trainer.generator_params());
    for (auto& [name, t] : trainer.generator_optimizer().m_state())
      ckpt.put("optim/m/" + name, t);
    for (auto& [name, t] : trainer.generator_optimizer().v_state())
      ckpt.put("optim/v/" + name, t);
    ckpt.meta["adam_steps"] = std::to_string(trainer.generator_optimizer().steps());
    ckpt.save(gan_g_ckpt());
  }
  {
    Checkpoint ckpt;
    ckpt.meta = meta;
    ckpt.meta["kind"] = "discriminator";
    save_params(ckpt, trainer.discriminator_params());
    ckpt.save(gan_d_ckpt());
  }

  if (!history.empty()) {
    rec.metrics["final_loss_d"] = history.back().loss_d;
    rec.metrics["final_loss_g_adv"] = history.back().loss_g_adv;
    rec.metrics["final_loss_g_l1"] = history.back().loss_g_l1;
  }
  rec.artifacts[gan_g_ckpt()] = "";
  rec.artifacts[gan_d_ckpt()] = "";
  rec.artifacts[csv] = "";
  rec.wall_seconds = seconds_since(t0);
  return rec;
}

namespace {

// carve a per-identity validation holdout out of one split
void split_holdout(const std::vector<Tensor<float>>& images,
                   const std::vector<int>& identities, const std::map<int, int>& remap,
                   double holdout_fraction, std::vector<LabeledImage>* train_set,
                   std::vector<LabeledImage>* val_set) {
  std::map<int, std::vector<std::size_t>> per_id;
  for (std::size_t i = 0; i < identities.size(); ++i)
    per_id[identities[i]].push_back(i);
  for (const auto& [id, indices] : per_id) {
    std::size_t n_val = static_cast<std::size_t>(
        std::floor(holdout_fraction * static_cast<double>(indices.size())));
    if (n_val >= indices.size()) n_val = indices.size() - 1;
    std::size_t n_train = indices.size() - n_val;
    for (std::size_t k = 0; k < indices.size(); ++k) {
      LabeledImage li{images[indices[k]], remap.at(id)};
      (k < n_train ? train_set : val_set)->push_back(std::move(li));
    }
  }
}

}  // namespace

StageRecord Pipeline::do_train_unimodal(bool color_stream) {
  auto t0 = std::chrono::steady_clock::now();
  Stage stage = color_stream ? Stage::kTrainUnimodalColor : Stage::kTrainUnimodalDepth;
  StageRecord rec;
  rec.stage = stage_name(stage);
  rec.config_hash = cfg_.hash();
  rec.seed = stage_seed(stage);

  DatasetStats stats = load_stats(stats_path());
  SplitData data = load_split((fs::path(processed_dir()) / "manifest.jsonl").string(),
                              "train", stats, !color_stream, false);
  const auto& images = color_stream ? data.colors_norm : data.grays_norm;
  if (images.empty()) throw DependencyError("train-unimodal: empty training split");

  std::map<int, int> remap = class_map(data.identities);
  std::vector<LabeledImage> train_set, val_set;
  split_holdout(images, data.identities, remap, cfg_.unimodal.holdout_fraction,
                &train_set, &val_set);

  CcpConfig cc;
  cc.in_ch = color_stream ? 3 : 1;
  cc.num_classes = static_cast<int>(remap.size());
  cc.width_scale = cfg_.unimodal.width_scale;
  cc.in_hw = static_cast<std::size_t>(cfg_.preprocess.out_size);
  CcpNetwork<float> net(cc);
  Rng init_rng(derive_seed(rec.seed, "init"));
  net.init(init_rng);

  nn::TrainSchedule sched = schedule_from(cfg_.unimodal);
  UnimodalTrainReport report =
      train_unimodal(net, train_set, val_set, sched, derive_seed(rec.seed, "train"));

  fs::create_directories(ckpt_dir());
  nn::ParamRegistry<float> params;
  net.register_params(params, "ccp");
  std::string path = color_stream ? color_ckpt() : gray_ckpt();
  save_net_checkpoint(path, params,
                      {{"kind", color_stream ? "ccp-color" : "ccp-gray"},
                       {"config_hash", cfg_.hash()},
                       {"seed", std::to_string(rec.seed)},
                       {"epoch", std::to_string(sched.epochs)},
                       {"in_ch", std::to_string(cc.in_ch)},
                       {"num_classes", std::to_string(cc.num_classes)},
                       {"width_scale", std::to_string(cc.width_scale)},
                       {"in_hw", std::to_string(cc.in_hw)}});

  if (!report.train_loss.empty()) rec.metrics["final_loss"] = report.train_loss.back();
  rec.metrics["best_val_accuracy"] = report.best_accuracy;
  rec.artifacts[path] = "";
  rec.wall_seconds = seconds_since(t0);
  return rec;
}

namespace {

CcpConfig ccp_config_from_meta(const Checkpoint& ckpt) {
  CcpConfig cc;
  cc.in_ch = std::stoul(ckpt.meta.at("in_ch"));
  cc.num_classes = std::stoi(ckpt.meta.at("num_classes"));
  cc.width_scale = std::stod(ckpt.meta.at("width_scale"));
  cc.in_hw = std::stoul(ckpt.meta.at("in_hw"));
  return cc;
}

CcpNetwork<float> load_ccp(const std::string& path, const std::string& expected_hash) {
  Checkpoint ckpt = Checkpoint::load(path);
  check_ckpt_hash(ckpt, path, expected_hash);
  CcpNetwork<float> net(ccp_config_from_meta(ckpt));
  nn::ParamRegistry<float> params;
  net.register_params(params, "ccp");
  load_params(ckpt, params);
  return net;
}

GeneratorNet<float> load_generator(const std::string& path,
                                   const std::string& expected_hash) {
  Checkpoint ckpt = Checkpoint::load(path);
  check_ckpt_hash(ckpt, path, expected_hash);
  GeneratorConfig gc;
  gc.in_hw = std::stoul(ckpt.meta.at("in_hw"));
  gc.width_scale = std::stod(ckpt.meta.at("width_scale"));
  gc.dropout_p = std::stod(ckpt.meta.at("dropout"));
  GeneratorNet<float> gen(gc);
  nn::ParamRegistry<float> params;
  gen.register_params(params, "g");
  load_params(ckpt, params);
  return gen;
}

}  // namespace

StageRecord Pipeline::do_finetune() {
  auto t0 = std::chrono::steady_clock::now();
  StageRecord rec;
  rec.stage = stage_name(Stage::kFinetune);
  rec.config_hash = cfg_.hash();
  rec.seed = stage_seed(Stage::kFinetune);

  DatasetStats stats = load_stats(stats_path());
  SplitData data = load_split((fs::path(processed_dir()) / "manifest.jsonl").string(),
                              "train", stats, false, true);
  std::map<int, int> remap = class_map(data.identities);
  std::vector<LabeledImage> train_set, val_set;
  split_holdout(data.depths_norm, data.identities, remap,
                cfg_.unimodal.holdout_fraction, &train_set, &val_set);

  CcpNetwork<float> net = load_ccp(gray_ckpt(), cfg_.hash());

  nn::TrainSchedule sched;
  sched.lr = cfg_.finetune.lr;
  sched.decay_period = 0;  // constant fine-tuning rate
  sched.momentum_start = cfg_.unimodal.momentum_start;
  sched.momentum_after = cfg_.unimodal.momentum_after;
  sched.momentum_switch_epoch =
      std::min(cfg_.unimodal.momentum_switch_epoch, cfg_.finetune.epochs);
  sched.epochs = cfg_.finetune.epochs;
  sched.batch_size = cfg_.finetune.batch_size;

  UnimodalTrainReport report =
      finetune(net, train_set, val_set, static_cast<int>(remap.size()), sched,
               derive_seed(rec.seed, "train"));

  nn::ParamRegistry<float> params;
  net.register_params(params, "ccp");
  save_net_checkpoint(depth_ft_ckpt(), params,
                      {{"kind", "ccp-depth"},
                       {"config_hash", cfg_.hash()},
                       {"seed", std::to_string(rec.seed)},
                       {"epoch", std::to_string(sched.epochs)},
                       {"in_ch", "1"},
                       {"num_classes", std::to_string(remap.size())},
                       {"width_scale", std::to_string(cfg_.unimodal.width_scale)},
                       {"in_hw", std::to_string(cfg_.preprocess.out_size)}});

  if (!report.train_loss.empty()) rec.metrics["final_loss"] = report.train_loss.back();
  rec.metrics["best_val_accuracy"] = report.best_accuracy;
  rec.artifacts[depth_ft_ckpt()] = "";
  rec.wall_seconds = seconds_since(t0);
  return rec;
}

StageRecord Pipeline::do_train_crossmodal() {
  auto t0 = std::chrono::steady_clock::now();
  StageRecord rec;
  rec.stage = stage_name(Stage::kTrainCrossmodal);
  rec.config_hash = cfg_.hash();
  rec.seed = stage_seed(Stage::kTrainCrossmodal);

  DatasetStats stats = load_stats(stats_path());
  SplitData data = load_split((fs::path(processed_dir()) / "manifest.jsonl").string(),
                              "train", stats, false, true);
  std::map<int, int> remap = class_map(data.identities);
  std::vector<int> labels;
  for (int id : data.identities) labels.push_back(remap.at(id));

  CcpNetwork<float> color_net = load_ccp(color_ckpt(), cfg_.hash());
  CcpNetwork<float> depth_net = load_ccp(depth_ft_ckpt(), cfg_.hash());

  CrossModalHeadConfig hc;
  hc.feature_dim = color_net.feature_dim();
  hc.shared_dim = static_cast<std::size_t>(cfg_.crossmodal.shared_dim);
  hc.num_classes = static_cast<int>(remap.size());
  CrossModalHead<float> head(hc);
  Rng init_rng(derive_seed(rec.seed, "init"));
  head.init(init_rng);

  CrossModalTrainConfig tc;
  tc.lambda = cfg_.crossmodal.correlation_weight;
  tc.lr = cfg_.crossmodal.lr;
  tc.epochs = cfg_.crossmodal.epochs;
  tc.batch_size = cfg_.crossmodal.batch_size;
  tc.momentum_start = cfg_.crossmodal.momentum_start;
  tc.momentum_after = cfg_.crossmodal.momentum_after;
  tc.momentum_switch_epoch = cfg_.crossmodal.momentum_switch_epoch;
  tc.freeze_streams = cfg_.crossmodal.freeze_streams;
  tc.correlation_only = cfg_.crossmodal.correlation_only;
  tc.seed = derive_seed(rec.seed, "train");

  CrossModalTrainReport report;
  if (tc.freeze_streams) {
    std::vector<const Tensor<float>*> cp, dp;
    for (const auto& t : data.colors_norm) cp.push_back(&t);
    for (const auto& t : data.depths_norm) dp.push_back(&t);
    FeaturePairSet pairs;
    pairs.color_features = extract_features(color_net, cp, cfg_.crossmodal.batch_size);
    pairs.depth_features = extract_features(depth_net, dp, cfg_.crossmodal.batch_size);
    pairs.labels = labels;
    report = train_crossmodal_head(head, pairs, tc);
  } else {
    std::vector<LabeledImage> color_images, depth_images;
    for (std::size_t i = 0; i < data.colors_norm.size(); ++i) {
      color_images.push_back({data.colors_norm[i], labels[i]});
      depth_images.push_back({data.depths_norm[i], labels[i]});
    }
    report = train_crossmodal_joint(head, color_net, depth_net, color_images,
                                    depth_images, tc);
  }

  fs::create_directories(curves_dir());
  std::string csv = (fs::path(curves_dir()) / "crossmodal_loss.csv").string();
  {
    std::ofstream out(csv);
    out << "epoch,softmax,correlation,map_color_norm,map_depth_norm\n";
    for (std::size_t e = 0; e < report.epochs.size(); ++e)
      out << e << "," << report.epochs[e].softmax_term << ","
          << report.epochs[e].correlation_term << ","
          << report.epochs[e].map_color_norm << ","
          << report.epochs[e].map_depth_norm << "\n";
  }

  Checkpoint ckpt;
  ckpt.meta = {{"kind", "crossmodal"},
               {"config_hash", cfg_.hash()},
               {"seed", std::to_string(rec.seed)},
               {"epoch", std::to_string(tc.epochs)},
               {"feature_dim", std::to_string(hc.feature_dim)},
               {"shared_dim", std::to_string(hc.shared_dim)},
               {"num_classes", std::to_string(hc.num_classes)},
               {"streams_included", tc.freeze_streams ? "0" : "1"}};
  nn::ParamRegistry<float> head_params;
  head.register_params(head_params, "xm");
  save_params(ckpt, head_params);
  if (!tc.freeze_streams) {
    nn::ParamRegistry<float> sp;
    color_net.register_params(sp, "color");
    depth_net.register_params(sp, "depth");
    save_params(ckpt, sp);
  }
  ckpt.save(crossmodal_ckpt());

  if (!report.epochs.empty()) {
    rec.metrics["final_softmax"] = report.epochs.back().softmax_term;
    rec.metrics["final_correlation"] = report.epochs.back().correlation_term;
  }
  rec.artifacts[crossmodal_ckpt()] = "";
  rec.artifacts[csv] = "";
  rec.wall_seconds = seconds_since(t0);
  return rec;
}

StageRecord Pipeline::do_evaluate() {
  auto t0 = std::chrono::steady_clock::now();
  StageRecord rec;
  rec.stage = stage_name(Stage::kEvaluate);
  rec.config_hash = cfg_.hash();
  rec.seed = stage_seed(Stage::kEvaluate);

  ProtocolConfig protocol = load_protocol(cfg_.evaluate.protocol);
  protocol.gallery_fraction = cfg_.evaluate.gallery_fraction;
  protocol.validate();

  DatasetStats stats = load_stats(stats_path());
  SplitData test = load_split((fs::path(processed_dir()) / "manifest.jsonl").string(),
                              "test", stats, false, true);
  if (test.identities.empty())
    throw DependencyError("evaluate: processed test split is empty");

  // per-identity gallery/probe partition, manifest order
  std::map<int, std::vector<std::size_t>> per_id;
  for (std::size_t i = 0; i < test.identities.size(); ++i)
    per_id[test.identities[i]].push_back(i);
  std::vector<std::size_t> gallery_idx, probe_idx;
  for (const auto& [id, indices] : per_id) {
    if (indices.size() < 2)
      throw ProtocolError("evaluate: identity " + std::to_string(id) +
                          " has fewer than 2 test samples");
    auto n_gallery = static_cast<std::size_t>(std::lround(
        protocol.gallery_fraction * static_cast<double>(indices.size())));
    n_gallery = std::clamp<std::size_t>(n_gallery, 1, indices.size() - 1);
    for (std::size_t k = 0; k < indices.size(); ++k)
      (k < n_gallery ? gallery_idx : probe_idx).push_back(indices[k]);
  }
  std::vector<int> gallery_ids, probe_ids;
  for (std::size_t i : gallery_idx) gallery_ids.push_back(test.identities[i]);
  for (std::size_t i : probe_idx) probe_ids.push_back(test.identities[i]);

  ChannelFeatures color_feats, depth_feats, mapped_feats;

  std::vector<const Tensor<float>*> probe_colors, gallery_colors, gallery_depths;
  for (std::size_t i : probe_idx) probe_colors.push_back(&test.colors_norm[i]);
  for (std::size_t i : gallery_idx) gallery_colors.push_back(&test.colors_norm[i]);
  for (std::size_t i : gallery_idx) gallery_depths.push_back(&test.depths_norm[i]);

  Tensor<float> probe_color_features, gallery_depth_features;

  if (protocol.channel_2d || protocol.channel_cross) {
    CcpNetwork<float> color_net = load_ccp(color_ckpt(), cfg_.hash());
    probe_color_features = extract_features(color_net, probe_colors);
    if (protocol.channel_2d) {
      color_feats.probe = probe_color_features;
      color_feats.gallery = extract_features(color_net, gallery_colors);
    }
  }

  if (protocol.channel_2p5d || protocol.channel_cross) {
    CcpNetwork<float> depth_net = load_ccp(depth_ft_ckpt(), cfg_.hash());
    gallery_depth_features = extract_features(depth_net, gallery_depths);
    if (protocol.channel_2p5d) {
      // probes enter in 2.5D only through reconstruction
      GeneratorNet<float> gen = load_generator(gan_g_ckpt(), cfg_.hash());
      ReconstructReport rr;
      std::vector<Tensor<float>> recon = reconstruct(gen, probe_colors, 16, &rr);
      std::vector<Tensor<float>> recon_norm;
      recon_norm.reserve(recon.size());
      for (auto& d : recon) {
        subtract_mean(d, stats.depth);
        recon_norm.push_back(std::move(d));
      }
      std::vector<const Tensor<float>*> rp;
      for (const auto& d : recon_norm) rp.push_back(&d);
      depth_feats.probe = extract_features(depth_net, rp);
      depth_feats.gallery = gallery_depth_features;
    }
  }

  if (protocol.channel_cross) {
    Checkpoint ckpt = Checkpoint::load(crossmodal_ckpt());
    check_ckpt_hash(ckpt, crossmodal_ckpt(), cfg_.hash());
    CrossModalHeadConfig hc;
    hc.feature_dim = std::stoul(ckpt.meta.at("feature_dim"));
    hc.shared_dim = std::stoul(ckpt.meta.at("shared_dim"));
    hc.num_classes = std::stoi(ckpt.meta.at("num_classes"));
    CrossModalHead<float> head(hc);
    nn::ParamRegistry<float> hp;
    head.register_params(hp, "xm");
    load_params(ckpt, hp);
    mapped_feats.probe = head.map_color(probe_color_features);
    mapped_feats.gallery = head.map_depth(gallery_depth_features);
  }

  ProtocolReport report = run_protocol_on_features(
      protocol, probe_ids, gallery_ids, color_feats, depth_feats, mapped_feats);

  fs::create_directories(reports_dir());
  std::string tag = protocol.name;
  std::string report_path =
      (fs::path(reports_dir()) / ("evaluate_" + tag + ".json")).string();
  {
    json j{{"protocol", report.protocol},
           {"config_hash", cfg_.hash()},
           {"channel_rank1", report.channel_rank1},
           {"fused_rank1", report.fused_rank1},
           {"num_probes", report.num_probes},
           {"num_gallery", report.num_gallery},
           {"wall_seconds", seconds_since(t0)}};
    std::ofstream out(report_path);
    out << j.dump(2) << "\n";
  }
  std::string cmc_csv = (fs::path(reports_dir()) / ("cmc_" + tag + ".csv")).string();
  {
    std::ofstream out(cmc_csv);
    out << "rank,accuracy\n";
    for (std::size_t r = 0; r < report.fused_cmc.size(); ++r)
      out << (r + 1) << "," << report.fused_cmc[r] << "\n";
  }
  std::string cmc_png = (fs::path(reports_dir()) / ("cmc_" + tag + ".png")).string();
  {
    PlotSeries s;
    for (std::size_t r = 0; r < report.fused_cmc.size(); ++r) {
      s.x.push_back(static_cast<double>(r + 1));
      s.y.push_back(report.fused_cmc[r]);
    }
    render_line_plot(cmc_png, {s});
  }
  if (cfg_.evaluate.dump_scores) {
    auto dump = [&](const ScoreMatrix& m) {
      std::string stem = m.modality;
      for (auto& ch : stem)
        if (ch == '/' || ch == '.') ch = '_';
      std::string bin =
          (fs::path(reports_dir()) / ("scores_" + tag + "_" + stem + ".bin")).string();
      std::ofstream out(bin, std::ios::binary);
      out.write(reinterpret_cast<const char*>(m.values.data()),
                static_cast<std::streamsize>(m.values.numel() * sizeof(float)));
      json j{{"probe_ids", m.probe_ids},
             {"gallery_ids", m.gallery_ids},
             {"modality", m.modality},
             {"normalized", m.normalized},
             {"config_hash", cfg_.hash()}};
      std::ofstream side(bin + ".json");
      side << j.dump(2) << "\n";
      rec.artifacts[bin] = "";
    };
    for (const auto& m : report.channel_matrices) dump(m);
    dump(report.fused);
  }

  for (const auto& [tag_name, r1] : report.channel_rank1)
    rec.metrics["rank1_" + tag_name] = r1;
  rec.metrics["rank1_fused"] = report.fused_rank1;
  rec.artifacts[report_path] = "";
  rec.artifacts[cmc_csv] = "";
  rec.artifacts[cmc_png] = "";
  rec.wall_seconds = seconds_since(t0);
  return rec;
}

double evaluate_feature_files(const std::string& probe_bin,
                              const std::string& gallery_bin) {
  FeatureFile probe = load_features(probe_bin);
  FeatureFile gallery = load_features(gallery_bin);
  if (probe.config_hash != gallery.config_hash)
    throw DependencyError(
        "evaluate: probe and gallery feature files come from different "
        "configurations (" + probe.config_hash + " vs " + gallery.config_hash + ")");
  ScoreMatrix raw = cosine_score_matrix(probe.features, probe.labels,
                                        gallery.features, gallery.labels,
                                        probe.modality + "-" + gallery.modality);
  return rank1_accuracy(normalize_scores(raw));
}

}  // namespace hfr
