#include "relkit/runconfig.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "relkit/errors.hpp"
#include "relkit/text.hpp"

namespace relkit::cli {

namespace {

using json = nlohmann::json;

const char* type_name(const ConfigValue& v) {
  switch (v.index()) {
    case 0: return "bool";
    case 1: return "int";
    case 2: return "number";
    default: return "string";
  }
}

ConfigValue from_json(const std::string& key, const json& j,
                      const ConfigValue& target) {
  switch (target.index()) {
    case 0:
      if (j.is_boolean()) return j.get<bool>();
      break;
    case 1:
      if (j.is_number_integer()) return j.get<int64_t>();
      break;
    case 2:
      if (j.is_number()) return j.get<double>();
      break;
    default:
      if (j.is_string()) return j.get<std::string>();
      break;
  }
  throw ConfigError("config: key \"" + key + "\" expects a " +
                    type_name(target) + " value");
}

ConfigValue from_text(const std::string& key, const std::string& text,
                      const ConfigValue& target) {
  auto bad = [&]() -> ConfigError {
    return ConfigError("config: override \"" + key + "=" + text +
                       "\" is not a valid " + type_name(target));
  };
  switch (target.index()) {
    case 0:
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw bad();
    case 1: {
      int64_t v = 0;
      auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc{} || p != text.data() + text.size()) throw bad();
      return v;
    }
    case 2: {
      try {
        size_t used = 0;
        double v = std::stod(text, &used);
        if (used != text.size()) throw bad();
        return v;
      } catch (const std::logic_error&) {
        throw bad();
      }
    }
    default:
      return text;
  }
}

}  // namespace

std::map<std::string, ConfigValue> default_config(const std::string& verb) {
  std::map<std::string, ConfigValue> d;
  d["seed"] = int64_t{0};
  d["task"] = std::string{"task2"};
  d["out.dir"] = std::string{"runs"};

  d["data.labeled"] = std::string{};
  d["data.eval"] = std::string{};
  d["data.catalogue"] = std::string{};
  d["data.vocab"] = std::string{};
  d["data.checkpoint"] = std::string{};
  d["data.checkpoints"] = std::string{};  // comma-separated ensemble
  d["data.predictions"] = std::string{};

  d["vocab.min_count"] = int64_t{1};
  d["vocab.max_size"] = int64_t{30000};

  d["enc.layers"] = int64_t{2};
  d["enc.d_model"] = int64_t{64};
  d["enc.heads"] = int64_t{4};
  d["enc.d_ff"] = int64_t{128};
  d["enc.max_len"] = int64_t{128};
  d["enc.dropout"] = 0.1;

  d["feat.ngram_buckets"] = int64_t{4096};
  d["feat.ngram_dim"] = int64_t{32};
  d["feat.id_dim"] = int64_t{16};
  d["feat.ngram_init"] = std::string{"random"};
  d["feat.vectors_path"] = std::string{};
  d["feat.max_brands"] = int64_t{256};
  d["feat.max_colors"] = int64_t{64};

  d["train.lr"] = 1e-5;
  d["train.warmup_ratio"] = 0.10;
  d["train.batch_size"] = int64_t{32};
  d["train.clip_norm"] = 1.0;
  d["train.pretrain_epochs"] = int64_t{10};
  d["train.finetune_epochs"] = int64_t{5};
  d["train.ema_decay"] = 0.999;
  d["train.fgm_epsilon"] = 1.0;
  d["train.rdrop_alpha"] = 1.0;
  d["train.mixup_alpha"] = 0.2;
  d["train.loss_kind"] = std::string{"ce"};
  d["train.focal_gamma"] = 2.0;
  d["train.poly1_eps"] = 1.0;
  d["train.ghm_bins"] = int64_t{10};
  // EMA tracks fine-tuning by default; pre-training leaves it off.
  d["train.ema"] = verb != "pretrain";
  d["train.fgm"] = false;
  d["train.rdrop"] = false;
  d["train.mixup"] = false;
  d["train.stop_after_epoch"] = int64_t{0};  // 0 = run to the end
  d["train.resume"] = std::string{};

  d["contrast.temperature"] = 0.05;
  d["contrast.queue_capacity"] = int64_t{64};
  d["contrast.momentum"] = 0.995;

  d["inst.mask_rate"] = 0.15;
  d["inst.mu_us"] = 4.0;
  d["inst.mu_es"] = 4.0;
  d["inst.mu_jp"] = 8.0;
  d["inst.mlm"] = true;
  d["inst.p2q"] = true;
  d["inst.p2brand"] = true;
  d["inst.p2color"] = true;
  d["inst.contrast"] = true;

  d["clean.folds"] = int64_t{5};
  d["clean.fraction"] = 0.04;
  d["clean.buckets"] = int64_t{32768};
  d["clean.epochs"] = int64_t{10};
  d["clean.lr"] = 0.5;

  d["ablate.stages"] = std::string{"ema,fgm,rdrop"};
  return d;
}

RunConfig resolve_config(const std::string& verb,
                         const std::string& config_path,
                         const std::vector<std::string>& overrides) {
  RunConfig rc;
  rc.verb = verb;
  rc.values = default_config(verb);

  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("config: cannot open " + config_path);
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw ConfigError("config: " + config_path + ": " + e.what());
    }
    if (!doc.is_object())
      throw ConfigError("config: " + config_path +
                        " must hold a flat JSON object");
    for (const auto& [key, value] : doc.items()) {
      auto it = rc.values.find(key);
      if (it == rc.values.end())
        throw ConfigError("config: unknown key \"" + key + "\" in " +
                          config_path);
      it->second = from_json(key, value, it->second);
    }
  }

  for (const auto& ov : overrides) {
    auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: override \"" + ov +
                        "\" must look like key=value");
    std::string key = ov.substr(0, eq);
    std::string text = ov.substr(eq + 1);
    auto it = rc.values.find(key);
    if (it == rc.values.end())
      throw ConfigError("config: unknown key \"" + key + "\"");
    it->second = from_text(key, text, it->second);
  }
  return rc;
}

bool RunConfig::get_bool(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end() || !std::holds_alternative<bool>(it->second))
    throw UsageError("config: no bool key \"" + key + "\"");
  return std::get<bool>(it->second);
}

int64_t RunConfig::get_int(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end() || !std::holds_alternative<int64_t>(it->second))
    throw UsageError("config: no int key \"" + key + "\"");
  return std::get<int64_t>(it->second);
}

double RunConfig::get_double(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) throw UsageError("config: no key \"" + key + "\"");
  if (std::holds_alternative<double>(it->second))
    return std::get<double>(it->second);
  if (std::holds_alternative<int64_t>(it->second))
    return static_cast<double>(std::get<int64_t>(it->second));
  throw UsageError("config: key \"" + key + "\" is not numeric");
}

const std::string& RunConfig::get_string(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end() || !std::holds_alternative<std::string>(it->second))
    throw UsageError("config: no string key \"" + key + "\"");
  return std::get<std::string>(it->second);
}

encoder::EncoderConfig RunConfig::encoder_config() const {
  encoder::EncoderConfig c;
  c.layers = get_int("enc.layers");
  c.d_model = get_int("enc.d_model");
  c.heads = get_int("enc.heads");
  c.d_ff = get_int("enc.d_ff");
  c.max_len = get_int("enc.max_len");
  c.dropout = get_double("enc.dropout");
  return c;  // vocab_size is set from the vocabulary at model init
}

encoder::FeatureConfig RunConfig::feature_config() const {
  encoder::FeatureConfig c;
  c.ngram_buckets = get_int("feat.ngram_buckets");
  c.ngram_dim = get_int("feat.ngram_dim");
  c.id_dim = get_int("feat.id_dim");
  c.ngram_init = encoder::parse_ngram_init(get_string("feat.ngram_init"));
  c.vectors_path = get_string("feat.vectors_path");
  return c;
}

trainer::TrainConfig RunConfig::train_config() const {
  trainer::TrainConfig c;
  c.lr = get_double("train.lr");
  c.warmup_ratio = get_double("train.warmup_ratio");
  c.batch_size = get_int("train.batch_size");
  c.clip_norm = get_double("train.clip_norm");
  c.pretrain_epochs = get_int("train.pretrain_epochs");
  c.finetune_epochs = get_int("train.finetune_epochs");
  c.ema_decay = get_double("train.ema_decay");
  c.fgm_epsilon = get_double("train.fgm_epsilon");
  c.rdrop_alpha = get_double("train.rdrop_alpha");
  c.mixup_alpha = get_double("train.mixup_alpha");
  c.loss_kind = objectives::parse_loss_kind(get_string("train.loss_kind"));
  c.loss_params.focal_gamma = get_double("train.focal_gamma");
  c.loss_params.poly1_eps = get_double("train.poly1_eps");
  c.loss_params.ghm_bins = get_int("train.ghm_bins");
  c.seed = static_cast<uint64_t>(get_int("seed"));
  c.toggles.ema = get_bool("train.ema");
  c.toggles.fgm = get_bool("train.fgm");
  c.toggles.rdrop = get_bool("train.rdrop");
  c.toggles.mixup = get_bool("train.mixup");
  return c;
}

objectives::ContrastiveConfig RunConfig::contrastive_config() const {
  objectives::ContrastiveConfig c;
  c.temperature = get_double("contrast.temperature");
  c.queue_capacity = get_int("contrast.queue_capacity");
  c.momentum = get_double("contrast.momentum");
  return c;
}

corpus::InstanceConfig RunConfig::instance_config() const {
  corpus::InstanceConfig c;
  c.mask_rate = get_double("inst.mask_rate");
  c.mu_us = get_double("inst.mu_us");
  c.mu_es = get_double("inst.mu_es");
  c.mu_jp = get_double("inst.mu_jp");
  c.max_len = get_int("enc.max_len");
  c.seed = static_cast<uint64_t>(get_int("seed"));
  c.tasks.mlm = get_bool("inst.mlm");
  c.tasks.p2q = get_bool("inst.p2q");
  c.tasks.p2brand = get_bool("inst.p2brand");
  c.tasks.p2color = get_bool("inst.p2color");
  c.tasks.contrast = get_bool("inst.contrast");
  return c;
}

std::string RunConfig::canonical_text() const {
  json doc = json::object();
  doc["verb"] = verb;
  for (const auto& [key, value] : values)
    std::visit([&](const auto& v) { doc[key] = v; }, value);
  return doc.dump(2) + "\n";
}

std::string RunConfig::hash8() const {
  uint64_t h = corpus::fnv1a64(canonical_text());
  static const char* hex = "0123456789abcdef";
  std::string out(8, '0');
  for (int i = 0; i < 8; ++i) out[static_cast<size_t>(i)] = hex[(h >> (60 - 4 * i)) & 0xF];
  return out;
}

std::string RunConfig::run_dir_name() const {
  return verb + "-" + hash8() + "-s" + std::to_string(get_int("seed"));
}

}  // namespace relkit::cli
