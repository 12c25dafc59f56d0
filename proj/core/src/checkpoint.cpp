#include "relkit/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "relkit/errors.hpp"

namespace relkit::trainer {

using nlohmann::json;
using numerics::Tensor;

namespace {

constexpr char kMagic[8] = {'R', 'E', 'L', 'K', 'I', 'T', 'C', '1'};
constexpr const char* kFormat = "relkit-checkpoint-v1";

std::string shape_str(const std::vector<int64_t>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += " x ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

json header_of(const Checkpoint& c,
               std::vector<const Tensor*>& payload) {
  json h;
  h["format"] = kFormat;
  h["phase"] = c.phase;

  h["counters"]["epochs_done"] = c.state.epochs_done;
  h["counters"]["global_step"] = c.state.global_step;
  h["counters"]["opt_step"] = c.state.opt.step;

  h["enc"]["layers"] = c.model.enc.layers;
  h["enc"]["d_model"] = c.model.enc.d_model;
  h["enc"]["heads"] = c.model.enc.heads;
  h["enc"]["d_ff"] = c.model.enc.d_ff;
  h["enc"]["vocab_size"] = c.model.enc.vocab_size;
  h["enc"]["max_len"] = c.model.enc.max_len;
  h["enc"]["dropout"] = c.model.enc.dropout;

  h["feat"]["ngram_buckets"] = c.model.feat.ngram_buckets;
  h["feat"]["ngram_dim"] = c.model.feat.ngram_dim;
  h["feat"]["id_dim"] = c.model.feat.id_dim;
  h["feat"]["ngram_init"] = encoder::to_string(c.model.feat.ngram_init);
  h["feat"]["vectors_path"] = c.model.feat.vectors_path;

  h["train"]["lr"] = c.train.lr;
  h["train"]["warmup_ratio"] = c.train.warmup_ratio;
  h["train"]["batch_size"] = c.train.batch_size;
  h["train"]["clip_norm"] = c.train.clip_norm;
  h["train"]["pretrain_epochs"] = c.train.pretrain_epochs;
  h["train"]["finetune_epochs"] = c.train.finetune_epochs;
  h["train"]["ema_decay"] = c.train.ema_decay;
  h["train"]["fgm_epsilon"] = c.train.fgm_epsilon;
  h["train"]["rdrop_alpha"] = c.train.rdrop_alpha;
  h["train"]["mixup_alpha"] = c.train.mixup_alpha;
  h["train"]["loss_kind"] = objectives::to_string(c.train.loss_kind);
  h["train"]["focal_gamma"] = c.train.loss_params.focal_gamma;
  h["train"]["poly1_eps"] = c.train.loss_params.poly1_eps;
  h["train"]["ghm_bins"] = c.train.loss_params.ghm_bins;
  h["train"]["seed"] = c.train.seed;
  h["train"]["ema"] = c.train.toggles.ema;
  h["train"]["fgm"] = c.train.toggles.fgm;
  h["train"]["rdrop"] = c.train.toggles.rdrop;
  h["train"]["mixup"] = c.train.toggles.mixup;

  h["contrast"]["temperature"] = c.contrast.temperature;
  h["contrast"]["queue_capacity"] = c.contrast.queue_capacity;
  h["contrast"]["momentum"] = c.contrast.momentum;

  h["ema"]["decay"] = c.state.ema.decay;
  h["ema"]["initialized"] = c.state.ema.initialized;
  h["queue"]["capacity"] = c.state.queue.capacity;
  h["queue"]["initialized"] = c.state.queue.initialized;

  h["vocab"]["tokens"] = c.model.vocab.tokens;
  h["vocab"]["countries"] = c.model.countries.values;
  h["vocab"]["brands"] = c.model.brands.values;
  h["vocab"]["colors"] = c.model.colors.values;

  json manifest = json::array();
  auto add = [&](const char* section, const std::string& name,
                 const Tensor& t) {
    json e;
    e["section"] = section;
    e["name"] = name;
    e["shape"] = t.shape;
    manifest.push_back(std::move(e));
    payload.push_back(&t);
  };
  for (const auto& e : c.model.params.entries) add("param", e.name, e.value);
  for (const auto& [name, t] : c.state.opt.m) add("opt_m", name, t);
  for (const auto& [name, t] : c.state.opt.v) add("opt_v", name, t);
  for (const auto& [name, t] : c.state.ema.shadow) add("ema", name, t);
  for (const auto& e : c.state.queue.shadow.entries)
    add("mom", e.name, e.value);
  for (size_t i = 0; i < c.state.queue.entries.size(); ++i)
    add("queue", "entry" + std::to_string(i), c.state.queue.entries[i]);
  h["manifest"] = std::move(manifest);
  return h;
}

}  // namespace

void checkpoint_save(const std::string& path, const Checkpoint& c) {
  std::vector<const Tensor*> payload;
  json h = header_of(c, payload);
  std::string header = h.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("checkpoint: cannot open " + path +
                                 " for writing");
  out.write(kMagic, sizeof(kMagic));
  uint32_t len = static_cast<uint32_t>(header.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const Tensor* t : payload) numerics::write_tensor(out, *t);
  out.flush();
  if (!out) throw RuntimeFailure("checkpoint: write failed for " + path);
}

Checkpoint checkpoint_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path);

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw RuntimeFailure("checkpoint: bad magic in " + path);
  uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) throw RuntimeFailure("checkpoint: truncated header length");

  in.seekg(0, std::ios::end);
  auto file_size = static_cast<uint64_t>(in.tellg());
  if (sizeof(kMagic) + sizeof(len) + static_cast<uint64_t>(len) > file_size)
    throw RuntimeFailure("checkpoint: header length exceeds file size");
  in.seekg(sizeof(kMagic) + sizeof(len), std::ios::beg);

  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw RuntimeFailure("checkpoint: truncated header");

  json h;
  try {
    h = json::parse(header);
  } catch (const json::exception& e) {
    throw RuntimeFailure(std::string("checkpoint: corrupt header: ") +
                         e.what());
  }

  Checkpoint c;
  try {
    if (h.at("format").get<std::string>() != kFormat)
      throw RuntimeFailure("checkpoint: unsupported format tag");
    c.phase = h.at("phase").get<std::string>();

    const json& enc = h.at("enc");
    c.model.enc.layers = enc.at("layers").get<int64_t>();
    c.model.enc.d_model = enc.at("d_model").get<int64_t>();
    c.model.enc.heads = enc.at("heads").get<int64_t>();
    c.model.enc.d_ff = enc.at("d_ff").get<int64_t>();
    c.model.enc.vocab_size = enc.at("vocab_size").get<int64_t>();
    c.model.enc.max_len = enc.at("max_len").get<int64_t>();
    c.model.enc.dropout = enc.at("dropout").get<double>();

    const json& feat = h.at("feat");
    c.model.feat.ngram_buckets = feat.at("ngram_buckets").get<int64_t>();
    c.model.feat.ngram_dim = feat.at("ngram_dim").get<int64_t>();
    c.model.feat.id_dim = feat.at("id_dim").get<int64_t>();
    c.model.feat.ngram_init =
        encoder::parse_ngram_init(feat.at("ngram_init").get<std::string>());
    c.model.feat.vectors_path = feat.at("vectors_path").get<std::string>();

    const json& tr = h.at("train");
    c.train.lr = tr.at("lr").get<double>();
    c.train.warmup_ratio = tr.at("warmup_ratio").get<double>();
    c.train.batch_size = tr.at("batch_size").get<int64_t>();
    c.train.clip_norm = tr.at("clip_norm").get<double>();
    c.train.pretrain_epochs = tr.at("pretrain_epochs").get<int64_t>();
    c.train.finetune_epochs = tr.at("finetune_epochs").get<int64_t>();
    c.train.ema_decay = tr.at("ema_decay").get<double>();
    c.train.fgm_epsilon = tr.at("fgm_epsilon").get<double>();
    c.train.rdrop_alpha = tr.at("rdrop_alpha").get<double>();
    c.train.mixup_alpha = tr.at("mixup_alpha").get<double>();
    c.train.loss_kind =
        objectives::parse_loss_kind(tr.at("loss_kind").get<std::string>());
    c.train.loss_params.focal_gamma = tr.at("focal_gamma").get<double>();
    c.train.loss_params.poly1_eps = tr.at("poly1_eps").get<double>();
    c.train.loss_params.ghm_bins = tr.at("ghm_bins").get<int64_t>();
    c.train.seed = tr.at("seed").get<uint64_t>();
    c.train.toggles.ema = tr.at("ema").get<bool>();
    c.train.toggles.fgm = tr.at("fgm").get<bool>();
    c.train.toggles.rdrop = tr.at("rdrop").get<bool>();
    c.train.toggles.mixup = tr.at("mixup").get<bool>();

    const json& ct = h.at("contrast");
    c.contrast.temperature = ct.at("temperature").get<double>();
    c.contrast.queue_capacity = ct.at("queue_capacity").get<int64_t>();
    c.contrast.momentum = ct.at("momentum").get<double>();

    const json& voc = h.at("vocab");
    c.model.vocab =
        corpus::vocab_from_tokens(voc.at("tokens").get<std::vector<std::string>>());
    c.model.countries = corpus::value_vocab_from_list(
        voc.at("countries").get<std::vector<std::string>>());
    c.model.brands = corpus::value_vocab_from_list(
        voc.at("brands").get<std::vector<std::string>>());
    c.model.colors = corpus::value_vocab_from_list(
        voc.at("colors").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw RuntimeFailure(std::string("checkpoint: corrupt header field: ") +
                         e.what());
  }

  // Rebuild the parameter skeleton without touching any n-gram vector
  // file; stored payloads overwrite every value below.
  encoder::FeatureConfig declared_feat = c.model.feat;
  c.model.feat.ngram_init = encoder::FeatureConfig::NGramInit::random;
  c.model.feat.vectors_path.clear();
  init_model(c.model, c.train.seed);
  c.model.feat = declared_feat;
  if (declared_feat.ngram_init ==
      encoder::FeatureConfig::NGramInit::pretrained_frozen) {
    auto it = c.model.params.index.find("feat.ngram");
    if (it != c.model.params.index.end())
      c.model.params.entries[it->second].trainable = false;
  }

  c.state.opt = opt_init(c.model.params);
  c.state.opt.step = h.at("counters").at("opt_step").get<int64_t>();
  c.state.epochs_done = h.at("counters").at("epochs_done").get<int64_t>();
  c.state.global_step = h.at("counters").at("global_step").get<int64_t>();

  double ema_decay = h.at("ema").at("decay").get<double>();
  if (h.at("ema").at("initialized").get<bool>()) {
    c.state.ema = ema_init(c.model.params, ema_decay);
  } else {
    c.state.ema.decay = ema_decay;
  }

  if (h.at("queue").at("initialized").get<bool>())
    objectives::momentum_init(c.state.queue, c.model.params, c.model.enc,
                              c.contrast);
  c.state.queue.capacity = h.at("queue").at("capacity").get<int64_t>();

  auto overlay = [&](Tensor& dst, const std::string& name, Tensor&& t) {
    if (!dst.same_shape(t))
      throw RuntimeFailure("checkpoint: shape mismatch for " + name +
                           ": file " + shape_str(t.shape) + ", config " +
                           shape_str(dst.shape));
    dst = std::move(t);
  };

  for (const json& e : h.at("manifest")) {
    std::string section = e.at("section").get<std::string>();
    std::string name = e.at("name").get<std::string>();
    auto shape = e.at("shape").get<std::vector<int64_t>>();
    Tensor t = numerics::read_tensor(in);
    if (t.shape != shape)
      throw RuntimeFailure("checkpoint: payload for " + name +
                           " does not match its manifest shape");
    if (section == "param") {
      if (!c.model.params.has(name))
        throw RuntimeFailure("checkpoint: unknown parameter " + name);
      overlay(c.model.params.get(name), name, std::move(t));
    } else if (section == "opt_m" || section == "opt_v") {
      auto& slot = section == "opt_m" ? c.state.opt.m : c.state.opt.v;
      auto it = slot.find(name);
      if (it == slot.end())
        throw RuntimeFailure("checkpoint: unknown optimizer slot " + name);
      overlay(it->second, name, std::move(t));
    } else if (section == "ema") {
      auto it = c.state.ema.shadow.find(name);
      if (it == c.state.ema.shadow.end())
        throw RuntimeFailure("checkpoint: unknown ema shadow " + name);
      overlay(it->second, name, std::move(t));
    } else if (section == "mom") {
      if (!c.state.queue.shadow.has(name))
        throw RuntimeFailure("checkpoint: unknown momentum tensor " + name);
      overlay(c.state.queue.shadow.get(name), name, std::move(t));
    } else if (section == "queue") {
      c.state.queue.entries.push_back(std::move(t));
    } else {
      throw RuntimeFailure("checkpoint: unknown manifest section " + section);
    }
  }
  if (in.peek() != std::ifstream::traits_type::eof())
    throw RuntimeFailure("checkpoint: trailing bytes after payload");
  return c;
}

}  // namespace relkit::trainer
