#include "relkit/features.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "relkit/rng.hpp"
#include "relkit/text.hpp"

namespace relkit::encoder {

namespace {

constexpr double kInitStd = 0.02;

Tensor init_normal(std::vector<int64_t> shape, uint64_t seed, double std) {
  Tensor t = Tensor::zeros(std::move(shape));
  Rng rng(seed);
  for (double& x : t.v) x = rng.normal() * std;
  return t;
}

// Plain-text vector file: "token f1 f2 ... fd" per line. Tokens hash to
// buckets with the same function the pooler uses; collisions resolve by
// last writer.
void overlay_pretrained(Tensor& table, const std::string& path, int64_t B,
                        int64_t d) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open n-gram vector file: " + path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string tok;
    row >> tok;
    int64_t b = static_cast<int64_t>(corpus::fnv1a64(tok) %
                                     static_cast<uint64_t>(B));
    for (int64_t j = 0; j < d; ++j) {
      double x;
      if (!(row >> x))
        throw DataError("vector file line " + std::to_string(lineno) +
                        ": expected " + std::to_string(d) + " floats");
      table.at(b, j) = x;
    }
  }
}

}  // namespace

void FeatureConfig::validate() const {
  if (ngram_buckets < 1) throw ConfigError("features: buckets must be >= 1");
  if (ngram_dim < 1) throw ConfigError("features: ngram dim must be >= 1");
  if (id_dim < 1) throw ConfigError("features: id dim must be >= 1");
  if (ngram_init != NGramInit::random && vectors_path.empty())
    throw ConfigError("features: pretrained n-gram init needs a vector file");
}

std::string to_string(FeatureConfig::NGramInit m) {
  switch (m) {
    case FeatureConfig::NGramInit::random: return "random";
    case FeatureConfig::NGramInit::pretrained: return "pretrained";
    case FeatureConfig::NGramInit::pretrained_frozen:
      return "pretrained_frozen";
  }
  throw UsageError("ngram init: unknown mode");
}

FeatureConfig::NGramInit parse_ngram_init(const std::string& s) {
  if (s == "random") return FeatureConfig::NGramInit::random;
  if (s == "pretrained") return FeatureConfig::NGramInit::pretrained;
  if (s == "pretrained_frozen")
    return FeatureConfig::NGramInit::pretrained_frozen;
  throw ConfigError("ngram init: expected random, pretrained or "
                    "pretrained_frozen, got '" + s + "'");
}

int64_t feature_dim(const EncoderConfig& enc, const FeatureConfig& feat) {
  return enc.d_model + 3 * feat.ngram_dim + 3 * feat.id_dim;
}

void init_feature_params(ParamStore& store, const FeatureConfig& cfg,
                         int64_t n_country, int64_t n_brand, int64_t n_color,
                         uint64_t seed) {
  cfg.validate();
  if (n_country < 1 || n_brand < 1 || n_color < 1)
    throw ConfigError("features: value vocabularies must be non-empty");
  Tensor ngram = init_normal({cfg.ngram_buckets, cfg.ngram_dim},
                             derive_seed(seed, "feat.ngram"), kInitStd);
  if (cfg.ngram_init != FeatureConfig::NGramInit::random)
    overlay_pretrained(ngram, cfg.vectors_path, cfg.ngram_buckets,
                       cfg.ngram_dim);
  bool frozen = cfg.ngram_init == FeatureConfig::NGramInit::pretrained_frozen;
  store.add("feat.ngram", std::move(ngram), !frozen);
  for (auto [name, rows] :
       {std::pair<const char*, int64_t>{"feat.id.country", n_country},
        {"feat.id.brand", n_brand},
        {"feat.id.color", n_color}})
    store.add(name, init_normal({rows, cfg.id_dim}, derive_seed(seed, name),
                                kInitStd));
}

std::vector<int64_t> ngram_buckets_of(const std::string& text,
                                      int64_t buckets) {
  std::vector<int64_t> out;
  for (const std::string& g : corpus::char_trigrams(text))
    out.push_back(static_cast<int64_t>(corpus::fnv1a64(g) %
                                       static_cast<uint64_t>(buckets)));
  return out;
}

Var ngram_pool(Tape& tape, Var table, const std::string& text,
               int64_t buckets) {
  return tape.mean_pool_bag(table, {ngram_buckets_of(text, buckets)});
}

Var assemble_features(Tape& tape, const LeafMap& leaves, Var cls,
                      const std::string& query,
                      const std::string& bullets_text,
                      const std::string& desc_text, int32_t country_id,
                      int32_t brand_id, int32_t color_id,
                      const FeatureConfig& cfg) {
  Var table = leaves.at("feat.ngram");
  std::vector<Var> parts;
  parts.push_back(cls);
  parts.push_back(ngram_pool(tape, table, query, cfg.ngram_buckets));
  parts.push_back(ngram_pool(tape, table, bullets_text, cfg.ngram_buckets));
  parts.push_back(ngram_pool(tape, table, desc_text, cfg.ngram_buckets));
  parts.push_back(tape.embedding_rows(leaves.at("feat.id.country"),
                                      {country_id}));
  parts.push_back(tape.embedding_rows(leaves.at("feat.id.brand"), {brand_id}));
  parts.push_back(tape.embedding_rows(leaves.at("feat.id.color"), {color_id}));
  return tape.concat_cols(parts);
}

namespace {

struct HeadSpec {
  const char* prefix;
  int64_t in;
  int64_t hidden;
  int64_t out;
};

HeadSpec head_spec(HeadKind head, const EncoderConfig& enc, int64_t feat_dim,
                   int64_t n_brand, int64_t n_color) {
  switch (head) {
    case HeadKind::ESCI4:
      return {"head.esci.", feat_dim, enc.d_ff, 4};
    case HeadKind::SUBSTITUTE2:
      return {"head.sub2.", feat_dim, enc.d_ff, 2};
    case HeadKind::P2Q2:
      return {"head.p2q.", enc.d_model, enc.d_ff, 2};
    case HeadKind::BRAND:
      return {"head.brand.", enc.d_model, enc.d_ff, n_brand};
    case HeadKind::COLOR:
      return {"head.color.", enc.d_model, enc.d_ff, n_color};
    case HeadKind::MLM:
      return {"head.mlm.", enc.d_model, enc.d_model, 0};  // tied output
  }
  throw UsageError("bad head kind");
}

}  // namespace

void init_head_params(ParamStore& store, const EncoderConfig& enc,
                      const FeatureConfig& feat, int64_t n_brand,
                      int64_t n_color, uint64_t seed) {
  int64_t fdim = feature_dim(enc, feat);
  for (HeadKind h : {HeadKind::ESCI4, HeadKind::SUBSTITUTE2, HeadKind::P2Q2,
                     HeadKind::BRAND, HeadKind::COLOR, HeadKind::MLM}) {
    HeadSpec s = head_spec(h, enc, fdim, n_brand, n_color);
    std::string p = s.prefix;
    store.add(p + "w1", init_normal({s.in, s.hidden},
                                    derive_seed(seed, p + "w1"), kInitStd));
    store.add(p + "b1", Tensor::zeros({s.hidden}));
    if (h == HeadKind::MLM) {
      // Output ties to enc.tok_emb; only the per-token bias is owned here.
      store.add(p + "bias", Tensor::zeros({enc.vocab_size}));
    } else {
      store.add(p + "w2", init_normal({s.hidden, s.out},
                                      derive_seed(seed, p + "w2"), kInitStd));
      store.add(p + "b2", Tensor::zeros({s.out}));
    }
  }
}

Var head_logits(Tape& tape, const LeafMap& leaves, Var x, HeadKind head) {
  std::string p;
  switch (head) {
    case HeadKind::ESCI4: p = "head.esci."; break;
    case HeadKind::SUBSTITUTE2: p = "head.sub2."; break;
    case HeadKind::P2Q2: p = "head.p2q."; break;
    case HeadKind::BRAND: p = "head.brand."; break;
    case HeadKind::COLOR: p = "head.color."; break;
    case HeadKind::MLM: p = "head.mlm."; break;
  }
  Var h = tape.tanh_(tape.add_row_bias(tape.matmul(x, leaves.at(p + "w1")),
                                       leaves.at(p + "b1")));
  if (head == HeadKind::MLM)
    return tape.add_row_bias(tape.matmul_nt(h, leaves.at("enc.tok_emb")),
                             leaves.at(p + "bias"));
  return tape.add_row_bias(tape.matmul(h, leaves.at(p + "w2")),
                           leaves.at(p + "b2"));
}

double esci_gain(int32_t esci_index) {
  constexpr double kGains[4] = {1.0, 0.1, 0.01, 0.0};
  if (esci_index < 0 || esci_index > 3)
    throw UsageError("esci_gain: class id out of range");
  return kGains[esci_index];
}

double rank_score(const std::vector<double>& probs) {
  if (probs.size() != 4)
    throw UsageError("rank_score: expected 4 probabilities");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= -1e-9)) throw UsageError("rank_score: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw UsageError("rank_score: probabilities must sum to 1");
  double s = 0.0;
  for (int32_t i = 0; i < 4; ++i) s += probs[static_cast<size_t>(i)] * esci_gain(i);
  return s;
}

}  // namespace relkit::encoder
