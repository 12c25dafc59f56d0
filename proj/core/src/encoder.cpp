#include "relkit/encoder.hpp"

#include <cmath>

#include "relkit/rng.hpp"
#include "relkit/vocab.hpp"

namespace relkit::encoder {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLnEps = 1e-5;
constexpr double kMaskFill = -1e9;

Tensor init_normal(std::vector<int64_t> shape, uint64_t seed, double std) {
  Tensor t = Tensor::zeros(std::move(shape));
  Rng rng(seed);
  for (double& x : t.v) x = rng.normal() * std;
  return t;
}

std::string ln(int64_t layer, int n) {
  return "enc.l" + std::to_string(layer) + "." + (n == 1 ? "ln1" : "ln2");
}

}  // namespace

void EncoderConfig::validate() const {
  if (layers < 1) throw ConfigError("encoder: layers must be >= 1");
  if (d_model < 1 || heads < 1 || d_model % heads != 0)
    throw ConfigError("encoder: d_model must be a positive multiple of heads");
  if (d_ff < 1) throw ConfigError("encoder: d_ff must be >= 1");
  if (vocab_size < corpus::Vocabulary::kNumSpecials)
    throw ConfigError("encoder: vocab_size must cover the special tokens");
  if (max_len < 2) throw ConfigError("encoder: max_len must be >= 2");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("encoder: dropout must be in [0, 1)");
}

std::vector<std::string> encoder_param_names(const EncoderConfig& cfg) {
  std::vector<std::string> names = {"enc.tok_emb", "enc.pos_emb"};
  for (int64_t l = 0; l < cfg.layers; ++l) {
    std::string p = "enc.l" + std::to_string(l) + ".";
    for (const char* s : {"ln1.g", "ln1.b", "wq", "bq", "wk", "bk", "wv",
                          "bv", "wo", "bo", "ln2.g", "ln2.b", "w1", "b1",
                          "w2", "b2"})
      names.push_back(p + s);
  }
  names.push_back("enc.ln_f.g");
  names.push_back("enc.ln_f.b");
  return names;
}

void init_encoder_params(ParamStore& store, const EncoderConfig& cfg,
                         uint64_t seed) {
  cfg.validate();
  auto seed_for = [&](const std::string& name) {
    return derive_seed(seed, name);
  };
  auto add_normal = [&](const std::string& name, std::vector<int64_t> shape) {
    store.add(name, init_normal(std::move(shape), seed_for(name), kInitStd));
  };
  auto add_zeros = [&](const std::string& name, std::vector<int64_t> shape) {
    store.add(name, Tensor::zeros(std::move(shape)));
  };
  auto add_ones = [&](const std::string& name, std::vector<int64_t> shape) {
    store.add(name, Tensor::full(std::move(shape), 1.0));
  };

  add_normal("enc.tok_emb", {cfg.vocab_size, cfg.d_model});
  add_normal("enc.pos_emb", {cfg.max_len, cfg.d_model});
  for (int64_t l = 0; l < cfg.layers; ++l) {
    std::string p = "enc.l" + std::to_string(l) + ".";
    add_ones(p + "ln1.g", {cfg.d_model});
    add_zeros(p + "ln1.b", {cfg.d_model});
    add_normal(p + "wq", {cfg.d_model, cfg.d_model});
    add_zeros(p + "bq", {cfg.d_model});
    add_normal(p + "wk", {cfg.d_model, cfg.d_model});
    add_zeros(p + "bk", {cfg.d_model});
    add_normal(p + "wv", {cfg.d_model, cfg.d_model});
    add_zeros(p + "bv", {cfg.d_model});
    add_normal(p + "wo", {cfg.d_model, cfg.d_model});
    add_zeros(p + "bo", {cfg.d_model});
    add_ones(p + "ln2.g", {cfg.d_model});
    add_zeros(p + "ln2.b", {cfg.d_model});
    add_normal(p + "w1", {cfg.d_model, cfg.d_ff});
    add_zeros(p + "b1", {cfg.d_ff});
    add_normal(p + "w2", {cfg.d_ff, cfg.d_model});
    add_zeros(p + "b2", {cfg.d_model});
  }
  add_ones("enc.ln_f.g", {cfg.d_model});
  add_zeros("enc.ln_f.b", {cfg.d_model});
}

EncodeResult encode(Tape& tape, const LeafMap& leaves,
                    const EncoderConfig& cfg,
                    const std::vector<int32_t>& ids, bool train,
                    uint64_t seed, const Tensor* tok_offset) {
  if (ids.empty()) throw UsageError("encode: empty id sequence");
  int64_t n = static_cast<int64_t>(ids.size());
  if (n > cfg.max_len) throw UsageError("encode: sequence longer than max_len");
  for (int32_t id : ids)
    if (id < 0 || id >= cfg.vocab_size)
      throw IndexError("encode: token id out of range");

  double p = train ? cfg.dropout : 0.0;
  int site = 0;
  auto drop = [&](Var x) {
    return tape.dropout(x, p,
                        derive_seed(seed, "drop", static_cast<uint64_t>(site++)));
  };

  // Additive attention mask: column j is crushed when ids[j] is [PAD].
  Tensor mask = Tensor::zeros({n, n});
  for (int64_t j = 0; j < n; ++j)
    if (ids[j] == corpus::Vocabulary::kPad)
      for (int64_t i = 0; i < n; ++i) mask.at(i, j) = kMaskFill;

  std::vector<int64_t> ids64(ids.begin(), ids.end());
  std::vector<int64_t> positions(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) positions[static_cast<size_t>(i)] = i;

  Var tok = tape.embedding_rows(leaves.at("enc.tok_emb"), ids64);
  if (tok_offset) {
    if (tok_offset->rank() != 2 || tok_offset->shape[0] != n ||
        tok_offset->shape[1] != cfg.d_model)
      throw ShapeError("encode: tok_offset must be [n x d]");
    tok = tape.cadd(tok, *tok_offset);
  }
  Var h = tape.add(tok, tape.take_rows(leaves.at("enc.pos_emb"), positions));
  h = drop(h);

  int64_t dh = cfg.d_model / cfg.heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int64_t l = 0; l < cfg.layers; ++l) {
    std::string pre = "enc.l" + std::to_string(l) + ".";
    Var x = tape.layer_norm_rows(h, leaves.at(pre + "ln1.g"),
                                 leaves.at(pre + "ln1.b"), kLnEps);
    Var q = tape.add_row_bias(tape.matmul(x, leaves.at(pre + "wq")),
                              leaves.at(pre + "bq"));
    Var k = tape.add_row_bias(tape.matmul(x, leaves.at(pre + "wk")),
                              leaves.at(pre + "bk"));
    Var v = tape.add_row_bias(tape.matmul(x, leaves.at(pre + "wv")),
                              leaves.at(pre + "bv"));
    std::vector<Var> ctx_heads;
    for (int64_t hd = 0; hd < cfg.heads; ++hd) {
      Var qh = tape.slice_cols(q, hd * dh, (hd + 1) * dh);
      Var kh = tape.slice_cols(k, hd * dh, (hd + 1) * dh);
      Var vh = tape.slice_cols(v, hd * dh, (hd + 1) * dh);
      Var scores = tape.cadd(tape.scale(tape.matmul_nt(qh, kh), scale), mask);
      Var attn = drop(tape.softmax_rows(scores));
      ctx_heads.push_back(tape.matmul(attn, vh));
    }
    Var ctx = tape.concat_cols(ctx_heads);
    Var attn_out = drop(tape.add_row_bias(tape.matmul(ctx, leaves.at(pre + "wo")),
                                          leaves.at(pre + "bo")));
    h = tape.add(h, attn_out);

    Var x2 = tape.layer_norm_rows(h, leaves.at(pre + "ln2.g"),
                                  leaves.at(pre + "ln2.b"), kLnEps);
    Var ff = tape.gelu(tape.add_row_bias(tape.matmul(x2, leaves.at(pre + "w1")),
                                         leaves.at(pre + "b1")));
    Var ff2 = drop(tape.add_row_bias(tape.matmul(ff, leaves.at(pre + "w2")),
                                     leaves.at(pre + "b2")));
    h = tape.add(h, ff2);
  }
  Var hidden = tape.layer_norm_rows(h, leaves.at("enc.ln_f.g"),
                                    leaves.at("enc.ln_f.b"), kLnEps);
  Var cls = tape.take_rows(hidden, {0});
  return {hidden, cls};
}

}  // namespace relkit::encoder
