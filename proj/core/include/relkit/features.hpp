#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relkit/autodiff.hpp"
#include "relkit/encoder.hpp"
#include "relkit/params.hpp"

namespace relkit::encoder {

// Hashed character-3-gram bag table plus the three ID-embedding tables
// feeding the fine-tuning feature block.
struct FeatureConfig {
  enum class NGramInit { random, pretrained, pretrained_frozen };

  int64_t ngram_buckets = 4096;
  int64_t ngram_dim = 32;
  int64_t id_dim = 16;
  NGramInit ngram_init = NGramInit::random;
  std::string vectors_path;  // used by the pretrained init modes

  void validate() const;
};

std::string to_string(FeatureConfig::NGramInit m);
// "random" | "pretrained" | "pretrained_frozen"; ConfigError on unknown.
FeatureConfig::NGramInit parse_ngram_init(const std::string& s);

// Total width of the assembled feature vector:
// [cls | query | bullets | desc | country | brand | color].
int64_t feature_dim(const EncoderConfig& enc, const FeatureConfig& feat);

// Registers the n-gram table (frozen when ngram_init is
// pretrained_frozen) and the country/brand/color tables; row 0 of every
// ID table is the out-of-vocabulary row.
void init_feature_params(ParamStore& store, const FeatureConfig& cfg,
                         int64_t n_country, int64_t n_brand, int64_t n_color,
                         uint64_t seed);

// Hashed bucket ids of the text's character 3-grams (multiset order
// preserved; duplicates kept so the mean weighs them).
std::vector<int64_t> ngram_buckets_of(const std::string& text,
                                      int64_t buckets);

// Mean of the bucket rows for the text's 3-grams; a [1 x d_g] zero row
// for empty text.
Var ngram_pool(Tape& tape, Var table, const std::string& text,
               int64_t buckets);

// Fixed-order concatenation of the fine-tuning feature block.
Var assemble_features(Tape& tape, const LeafMap& leaves, Var cls,
                      const std::string& query,
                      const std::string& bullets_text,
                      const std::string& desc_text, int32_t country_id,
                      int32_t brand_id, int32_t color_id,
                      const FeatureConfig& cfg);

enum class HeadKind { ESCI4, SUBSTITUTE2, P2Q2, BRAND, COLOR, MLM };

// Registers every task head: one tanh hidden layer then a linear
// projection. The MLM head's hidden width is d_model (not d_ff) so its
// output projection can tie to the token embedding table.
void init_head_params(ParamStore& store, const EncoderConfig& enc,
                      const FeatureConfig& feat, int64_t n_brand,
                      int64_t n_color, uint64_t seed);

// x: [n x in_dim] rows. MLM ties the output matrix to enc.tok_emb.
Var head_logits(Tape& tape, const LeafMap& leaves, Var x, HeadKind head);

// Ranking gain of one relevance class id (E=0 1.0, S=1 0.1, C=2 0.01,
// I=3 0.0).
double esci_gain(int32_t esci_index);

// Expected gain of an ESCI probability vector under the gains
// {Exact 1.0, Substitute 0.1, Complement 0.01, Irrelevant 0.0}.
double rank_score(const std::vector<double>& probs);

}  // namespace relkit::encoder
