#include "relkit/vocab.hpp"

#include <algorithm>
#include <fstream>

#include "relkit/errors.hpp"
#include "relkit/text.hpp"

namespace relkit::corpus {

namespace {

const char* kSpecials[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};

Vocabulary with_specials() {
  Vocabulary v;
  for (int32_t i = 0; i < Vocabulary::kNumSpecials; ++i) {
    v.tokens.emplace_back(kSpecials[i]);
    v.to_id.emplace(kSpecials[i], i);
  }
  return v;
}

}  // namespace

Vocabulary build_vocab(const std::vector<std::string>& texts,
                       int64_t min_count, int64_t max_size) {
  if (min_count < 1) throw UsageError("build_vocab: min_count must be >= 1");
  if (max_size < Vocabulary::kNumSpecials)
    throw UsageError("build_vocab: max_size must fit the specials");
  std::unordered_map<std::string, int64_t> counts;
  for (const std::string& t : texts)
    for (std::string& w : split_words(t)) counts[std::move(w)] += 1;
  std::vector<std::pair<std::string, int64_t>> ranked;
  ranked.reserve(counts.size());
  for (auto& kv : counts)
    if (kv.second >= min_count) ranked.emplace_back(kv.first, kv.second);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v = with_specials();
  for (auto& [tok, cnt] : ranked) {
    (void)cnt;
    if (v.size() >= max_size) break;
    v.to_id.emplace(tok, v.size());
    v.tokens.push_back(tok);
  }
  return v;
}

std::vector<int32_t> content_ids(const std::string& text,
                                 const Vocabulary& v) {
  std::vector<int32_t> ids;
  for (const std::string& w : split_words(text)) {
    auto it = v.to_id.find(w);
    if (it != v.to_id.end()) {
      ids.push_back(it->second);
      continue;
    }
    // Character fallback; unknown-character runs collapse to one [UNK].
    bool last_unk = false;
    for (char32_t c : decode_utf8(w)) {
      auto cit = v.to_id.find(encode_utf8(c));
      if (cit != v.to_id.end()) {
        ids.push_back(cit->second);
        last_unk = false;
      } else if (!last_unk) {
        ids.push_back(Vocabulary::kUnk);
        last_unk = true;
      }
    }
  }
  return ids;
}

namespace {

std::vector<int32_t> wrap_truncate(std::vector<int32_t> ids, int64_t max_len) {
  if (static_cast<int64_t>(ids.size()) + 1 > max_len)
    ids.resize(static_cast<size_t>(max_len - 1));
  ids.push_back(Vocabulary::kSep);
  return ids;
}

}  // namespace

std::vector<int32_t> tokenize(const std::string& text, const Vocabulary& v,
                              int64_t max_len) {
  if (max_len < 2) throw UsageError("tokenize: max_len must be >= 2");
  std::vector<int32_t> ids;
  ids.push_back(Vocabulary::kCls);
  for (int32_t id : content_ids(text, v)) ids.push_back(id);
  return wrap_truncate(std::move(ids), max_len);
}

std::vector<int32_t> tokenize_pair(const std::string& a,
                                   const std::string& b,
                                   const Vocabulary& v, int64_t max_len) {
  if (max_len < 3) throw UsageError("tokenize_pair: max_len must be >= 3");
  std::vector<int32_t> ids;
  ids.push_back(Vocabulary::kCls);
  for (int32_t id : content_ids(a, v)) ids.push_back(id);
  ids.push_back(Vocabulary::kSep);
  for (int32_t id : content_ids(b, v)) ids.push_back(id);
  return wrap_truncate(std::move(ids), max_len);
}

void save_vocab(const std::string& path, const Vocabulary& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary file: " + path);
  for (const std::string& t : v.tokens) out << t << '\n';
}

Vocabulary vocab_from_tokens(const std::vector<std::string>& tokens) {
  Vocabulary v;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (v.to_id.count(tokens[i]))
      throw DataError("vocabulary token " + std::to_string(i + 1) +
                      ": duplicate token");
    v.to_id.emplace(tokens[i], v.size());
    v.tokens.push_back(tokens[i]);
  }
  for (int32_t i = 0; i < Vocabulary::kNumSpecials; ++i)
    if (i >= v.size() || v.tokens[static_cast<size_t>(i)] != kSpecials[i])
      throw DataError("vocabulary missing special token at id " +
                      std::to_string(i));
  return v;
}

Vocabulary load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file: " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return vocab_from_tokens(tokens);
}

int32_t ValueVocab::id_of(const std::string& raw) const {
  auto it = to_id.find(normalize(raw));
  return it == to_id.end() ? 0 : it->second;
}

ValueVocab build_value_vocab(const std::vector<std::string>& raw,
                             int64_t max_size) {
  if (max_size < 1) throw UsageError("value vocab: max_size must be >= 1");
  std::unordered_map<std::string, int64_t> counts;
  for (const std::string& r : raw) {
    std::string n = normalize(r);
    if (!n.empty()) counts[std::move(n)] += 1;
  }
  std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(),
                                                      counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  ValueVocab v;
  v.values.emplace_back("");
  for (auto& [val, cnt] : ranked) {
    (void)cnt;
    if (v.size() >= max_size) break;
    v.to_id.emplace(val, v.size());
    v.values.push_back(val);
  }
  return v;
}

ValueVocab value_vocab_from_list(const std::vector<std::string>& values) {
  ValueVocab v;
  v.values = values;
  for (size_t i = 1; i < values.size(); ++i)
    v.to_id.emplace(values[i], static_cast<int32_t>(i));
  return v;
}

}  // namespace relkit::corpus
