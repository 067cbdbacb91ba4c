#include "hfr/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hfr/errors.hpp"
#include "hfr/rng.hpp"

namespace hfr {

using nlohmann::json;

namespace {

// Applies present keys onto defaults, rejecting anything unknown.
class SectionReader {
 public:
  SectionReader(const json& j, std::string prefix)
      : j_(j), prefix_(std::move(prefix)) {
    if (!j.is_object())
      throw ConfigError("config: '" + prefix_ + "' must be an object");
  }

  ~SectionReader() = default;

  template <typename T>
  void field(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config: wrong type for '" + prefix_ + key + "'");
    }
  }

  void mark(const char* key) { seen_.insert(key); }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key))
        throw ConfigError("config: unknown key '" + prefix_ + key + "'");
  }

 private:
  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

void check(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError("config: '" + key + "' " + what);
}

}  // namespace

void ExperimentConfig::validate() const {
  check(data.num_ids >= 1, "data.num_ids", "must be >= 1");
  check(data.samples_per_id >= 1, "data.samples_per_id", "must be >= 1");
  double fsum = data.split[0] + data.split[1] + data.split[2];
  check(std::abs(fsum - 1.0) <= 1e-9, "data.split", "must sum to 1");
  for (double f : data.split) check(f >= 0.0, "data.split", "fractions must be >= 0");
  check(data.canvas >= 64, "data.canvas", "must be >= 64");
  check(data.noise >= 0.0, "data.noise", "must be >= 0");

  check(preprocess.out_size > 0 && preprocess.out_size % 64 == 0,
        "preprocess.out_size", "must be a positive multiple of 64");
  check(preprocess.iod > 0.0 && preprocess.iod < preprocess.out_size,
        "preprocess.iod", "must be in (0, out_size)");
  check(preprocess.eye_row > 0.0 && preprocess.eye_row < preprocess.out_size,
        "preprocess.eye_row", "must be in (0, out_size)");

  check(gan.lr > 0.0, "gan.lr", "must be > 0");
  check(gan.l1_weight >= 0.0, "gan.l1_weight", "must be >= 0");
  check(gan.epochs >= 0, "gan.epochs", "must be >= 0");
  check(gan.batch_size >= 1, "gan.batch_size", "must be >= 1");
  check(gan.width_scale > 0.0, "gan.width_scale", "must be > 0");
  check(gan.dropout >= 0.0 && gan.dropout < 1.0, "gan.dropout", "must be in [0,1)");
  check(gan.beta2 > 0.0 && gan.beta2 < 1.0, "gan.beta2", "must be in (0,1)");
  check(gan.momentum_start >= 0.0 && gan.momentum_start < 1.0,
        "gan.momentum_start", "must be in [0,1)");
  check(gan.momentum_after >= 0.0 && gan.momentum_after < 1.0,
        "gan.momentum_after", "must be in [0,1)");
  check(gan.momentum_switch_epoch >= 0, "gan.momentum_switch_epoch", "must be >= 0");
  check(gan.d_optimizer == "adam" || gan.d_optimizer == "sgd", "gan.d_optimizer",
        "must be adam or sgd");
  check(gan.mode == "joint" || gan.mode == "l1_only" || gan.mode == "adv_only",
        "gan.mode", "must be joint, l1_only or adv_only");

  check(unimodal.lr > 0.0, "unimodal.lr", "must be > 0");
  check(unimodal.decay_factor > 1.0, "unimodal.decay_factor", "must be > 1");
  check(unimodal.decay_period >= 0, "unimodal.decay_period", "must be >= 0");
  check(unimodal.epochs >= 0, "unimodal.epochs", "must be >= 0");
  check(unimodal.batch_size >= 1, "unimodal.batch_size", "must be >= 1");
  check(unimodal.width_scale > 0.0, "unimodal.width_scale", "must be > 0");
  check(unimodal.momentum_switch_epoch <= unimodal.epochs,
        "unimodal.momentum_switch_epoch", "must be <= epochs");
  check(unimodal.holdout_fraction >= 0.0 && unimodal.holdout_fraction < 1.0,
        "unimodal.holdout_fraction", "must be in [0,1)");

  check(finetune.lr > 0.0, "finetune.lr", "must be > 0");
  check(finetune.epochs >= 0, "finetune.epochs", "must be >= 0");
  check(finetune.batch_size >= 1, "finetune.batch_size", "must be >= 1");

  check(crossmodal.correlation_weight >= 0.0, "crossmodal.correlation_weight",
        "must be >= 0");
  check(crossmodal.lr > 0.0, "crossmodal.lr", "must be > 0");
  check(crossmodal.epochs >= 0, "crossmodal.epochs", "must be >= 0");
  check(crossmodal.batch_size >= 1, "crossmodal.batch_size", "must be >= 1");
  check(crossmodal.shared_dim >= 1, "crossmodal.shared_dim", "must be >= 1");

  check(!evaluate.protocol.empty(), "evaluate.protocol", "must not be empty");
  check(evaluate.gallery_fraction > 0.0 && evaluate.gallery_fraction < 1.0,
        "evaluate.gallery_fraction", "must be in (0,1)");
}

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");

  ExperimentConfig cfg;
  SectionReader top(j, "");
  top.field("seed", cfg.seed);
  top.field("out_dir", cfg.out_dir);

  {
    json empty_obj = json::object();
    auto it = j.find("data");
    SectionReader r(it == j.end() ? empty_obj : *it, "data.");
    top.mark("data");
    r.field("num_ids", cfg.data.num_ids);
    r.field("samples_per_id", cfg.data.samples_per_id);
    r.field("split", cfg.data.split);
    r.field("canvas", cfg.data.canvas);
    r.field("noise", cfg.data.noise);
    r.finish();
  }
  {
    json empty_obj = json::object();
    auto it = j.find("preprocess");
    SectionReader r(it == j.end() ? empty_obj : *it, "preprocess.");
    top.mark("preprocess");
    r.field("iod", cfg.preprocess.iod);
    r.field("eye_row", cfg.preprocess.eye_row);
    r.field("out_size", cfg.preprocess.out_size);
    r.finish();
  }
  {
    json empty_obj = json::object();
    auto it = j.find("gan");
    SectionReader r(it == j.end() ? empty_obj : *it, "gan.");
    top.mark("gan");
    r.field("lr", cfg.gan.lr);
    r.field("l1_weight", cfg.gan.l1_weight);
    r.field("epochs", cfg.gan.epochs);
    r.field("batch_size", cfg.gan.batch_size);
    r.field("width_scale", cfg.gan.width_scale);
    r.field("dropout", cfg.gan.dropout);
    r.field("beta2", cfg.gan.beta2);
    r.field("momentum_start", cfg.gan.momentum_start);
    r.field("momentum_after", cfg.gan.momentum_after);
    r.field("momentum_switch_epoch", cfg.gan.momentum_switch_epoch);
    r.field("d_optimizer", cfg.gan.d_optimizer);
    r.field("mode", cfg.gan.mode);
    r.finish();
  }
  {
    json empty_obj = json::object();
    auto it = j.find("unimodal");
    SectionReader r(it == j.end() ? empty_obj : *it, "unimodal.");
    top.mark("unimodal");
    r.field("lr", cfg.unimodal.lr);
    r.field("decay_factor", cfg.unimodal.decay_factor);
    r.field("decay_period", cfg.unimodal.decay_period);
    r.field("momentum_start", cfg.unimodal.momentum_start);
    r.field("momentum_after", cfg.unimodal.momentum_after);
    r.field("momentum_switch_epoch", cfg.unimodal.momentum_switch_epoch);
    r.field("epochs", cfg.unimodal.epochs);
    r.field("batch_size", cfg.unimodal.batch_size);
    r.field("width_scale", cfg.unimodal.width_scale);
    r.field("holdout_fraction", cfg.unimodal.holdout_fraction);
    r.finish();
  }
  {
    json empty_obj = json::object();
    auto it = j.find("finetune");
    SectionReader r(it == j.end() ? empty_obj : *it, "finetune.");
    top.mark("finetune");
    r.field("lr", cfg.finetune.lr);
    r.field("epochs", cfg.finetune.epochs);
    r.field("batch_size", cfg.finetune.batch_size);
    r.finish();
  }
  {
    json empty_obj = json::object();
    auto it = j.find("crossmodal");
    SectionReader r(it == j.end() ? empty_obj : *it, "crossmodal.");
    top.mark("crossmodal");
    r.field("correlation_weight", cfg.crossmodal.correlation_weight);
    r.field("lr", cfg.crossmodal.lr);
    r.field("epochs", cfg.crossmodal.epochs);
    r.field("batch_size", cfg.crossmodal.batch_size);
    r.field("momentum_start", cfg.crossmodal.momentum_start);
    r.field("momentum_after", cfg.crossmodal.momentum_after);
    r.field("momentum_switch_epoch", cfg.crossmodal.momentum_switch_epoch);
    r.field("freeze_streams", cfg.crossmodal.freeze_streams);
    r.field("correlation_only", cfg.crossmodal.correlation_only);
    r.field("shared_dim", cfg.crossmodal.shared_dim);
    r.finish();
  }
  {
    json empty_obj = json::object();
    auto it = j.find("evaluate");
    SectionReader r(it == j.end() ? empty_obj : *it, "evaluate.");
    top.mark("evaluate");
    r.field("protocol", cfg.evaluate.protocol);
    r.field("gallery_fraction", cfg.evaluate.gallery_fraction);
    r.field("dump_scores", cfg.evaluate.dump_scores);
    r.finish();
  }
  top.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return config_from_json_text(buf.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j{
      {"seed", cfg.seed},
      {"out_dir", cfg.out_dir},
      {"data",
       {{"num_ids", cfg.data.num_ids},
        {"samples_per_id", cfg.data.samples_per_id},
        {"split", cfg.data.split},
        {"canvas", cfg.data.canvas},
        {"noise", cfg.data.noise}}},
      {"preprocess",
       {{"iod", cfg.preprocess.iod},
        {"eye_row", cfg.preprocess.eye_row},
        {"out_size", cfg.preprocess.out_size}}},
      {"gan",
       {{"lr", cfg.gan.lr},
        {"l1_weight", cfg.gan.l1_weight},
        {"epochs", cfg.gan.epochs},
        {"batch_size", cfg.gan.batch_size},
        {"width_scale", cfg.gan.width_scale},
        {"dropout", cfg.gan.dropout},
        {"beta2", cfg.gan.beta2},
        {"momentum_start", cfg.gan.momentum_start},
        {"momentum_after", cfg.gan.momentum_after},
        {"momentum_switch_epoch", cfg.gan.momentum_switch_epoch},
        {"d_optimizer", cfg.gan.d_optimizer},
        {"mode", cfg.gan.mode}}},
      {"unimodal",
       {{"lr", cfg.unimodal.lr},
        {"decay_factor", cfg.unimodal.decay_factor},
        {"decay_period", cfg.unimodal.decay_period},
        {"momentum_start", cfg.unimodal.momentum_start},
        {"momentum_after", cfg.unimodal.momentum_after},
        {"momentum_switch_epoch", cfg.unimodal.momentum_switch_epoch},
        {"epochs", cfg.unimodal.epochs},
        {"batch_size", cfg.unimodal.batch_size},
        {"width_scale", cfg.unimodal.width_scale},
        {"holdout_fraction", cfg.unimodal.holdout_fraction}}},
      {"finetune",
       {{"lr", cfg.finetune.lr},
        {"epochs", cfg.finetune.epochs},
        {"batch_size", cfg.finetune.batch_size}}},
      {"crossmodal",
       {{"correlation_weight", cfg.crossmodal.correlation_weight},
        {"lr", cfg.crossmodal.lr},
        {"epochs", cfg.crossmodal.epochs},
        {"batch_size", cfg.crossmodal.batch_size},
        {"momentum_start", cfg.crossmodal.momentum_start},
        {"momentum_after", cfg.crossmodal.momentum_after},
        {"momentum_switch_epoch", cfg.crossmodal.momentum_switch_epoch},
        {"freeze_streams", cfg.crossmodal.freeze_streams},
        {"correlation_only", cfg.crossmodal.correlation_only},
        {"shared_dim", cfg.crossmodal.shared_dim}}},
      {"evaluate",
       {{"protocol", cfg.evaluate.protocol},
        {"gallery_fraction", cfg.evaluate.gallery_fraction},
        {"dump_scores", cfg.evaluate.dump_scores}}},
  };
  return j.dump(2);
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("config: cannot open " + path + " for writing");
  out << config_to_json(cfg) << "\n";
}

std::string ExperimentConfig::hash() const {
  // The hash identifies the experiment, not where it lands on disk: two
  // runs of one configuration into different directories share it.
  ExperimentConfig c = *this;
  c.out_dir.clear();
  std::uint64_t h = fnv1a64(config_to_json(c));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace hfr
