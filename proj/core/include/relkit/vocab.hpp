#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace relkit::corpus {

// Token vocabulary with five fixed specials at ids 0-4. Ids are dense;
// the token list and the map stay in bijection.
struct Vocabulary {
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kUnk = 1;
  static constexpr int32_t kCls = 2;
  static constexpr int32_t kSep = 3;
  static constexpr int32_t kMask = 4;
  static constexpr int32_t kNumSpecials = 5;

  std::vector<std::string> tokens;
  std::unordered_map<std::string, int32_t> to_id;

  int32_t size() const { return static_cast<int32_t>(tokens.size()); }
  bool has(const std::string& t) const { return to_id.count(t) != 0; }
  int32_t id_or_unk(const std::string& t) const {
    auto it = to_id.find(t);
    return it == to_id.end() ? kUnk : it->second;
  }
  // First id eligible as a random MLM replacement (non-special).
  int32_t first_regular() const { return kNumSpecials; }
};

// Counts split_words tokens over the texts; keeps tokens with count >=
// min_count, ordered by descending frequency then lexicographically, up
// to max_size total ids (specials included).
Vocabulary build_vocab(const std::vector<std::string>& texts,
                       int64_t min_count, int64_t max_size);

// Bare content ids for a text, no specials. A word missing from the
// vocabulary is re-split into single characters; runs of unknown
// characters collapse into one [UNK].
std::vector<int32_t> content_ids(const std::string& text,
                                 const Vocabulary& v);

// [CLS] ids [SEP], truncated to max_len keeping the final [SEP].
std::vector<int32_t> tokenize(const std::string& text, const Vocabulary& v,
                              int64_t max_len);

// [CLS] a [SEP] b [SEP], truncated to max_len keeping the final [SEP].
std::vector<int32_t> tokenize_pair(const std::string& a,
                                   const std::string& b,
                                   const Vocabulary& v, int64_t max_len);

// One token per line; the line number is the id.
void save_vocab(const std::string& path, const Vocabulary& v);
Vocabulary load_vocab(const std::string& path);
// Rebuilds a vocabulary from an id-ordered token list, validating the
// special tokens and duplicates the same way load_vocab does.
Vocabulary vocab_from_tokens(const std::vector<std::string>& tokens);

// Categorical string values (brand, color, country) mapped to dense ids.
// Id 0 is the out-of-vocabulary row; unknown values map there instead of
// erroring. Values are compared after text normalization.
struct ValueVocab {
  std::vector<std::string> values;  // values[0] = "" (the OOV slot)
  std::unordered_map<std::string, int32_t> to_id;

  int32_t size() const { return static_cast<int32_t>(values.size()); }
  int32_t id_of(const std::string& raw) const;

  bool operator==(const ValueVocab& o) const { return values == o.values; }
};

// Most frequent max_size-1 distinct normalized values, frequency then
// lexicographic order; empty strings are ignored.
ValueVocab build_value_vocab(const std::vector<std::string>& raw,
                             int64_t max_size);
ValueVocab value_vocab_from_list(const std::vector<std::string>& values);

}  // namespace relkit::corpus
