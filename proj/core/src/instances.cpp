#include "relkit/instances.hpp"

#include <algorithm>
#include <array>

#include "relkit/errors.hpp"
#include "relkit/text.hpp"

namespace relkit::corpus {

std::string to_string(TaskTag t) {
  switch (t) {
    case TaskTag::MLM: return "mlm";
    case TaskTag::P2Q: return "p2q";
    case TaskTag::P2BRAND: return "p2brand";
    case TaskTag::P2COLOR: return "p2color";
    case TaskTag::CONTRAST: return "contrast";
  }
  throw UsageError("bad task tag");
}

std::string sample_fake_query(const ProductRecord& p, Rng& rng, double mu) {
  if (mu <= 0.0) throw UsageError("sample_fake_query: mu must be positive");
  std::vector<std::string> words = split_words(product_text(p));
  if (words.empty())
    throw DataError("sample_fake_query: product " + p.product_id +
                    " has no text tokens");
  int64_t n = static_cast<int64_t>(words.size());
  int64_t k = rng.poisson(mu);
  k = std::clamp<int64_t>(k, 1, n);
  int64_t start =
      static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n - k + 1)));
  std::string out;
  for (int64_t i = start; i < start + k; ++i) {
    if (!out.empty()) out += ' ';
    out += words[static_cast<size_t>(i)];
  }
  return out;
}

namespace {

std::vector<std::string> desc_chunks(const std::string& desc) {
  constexpr size_t kChunkWords = 32;
  std::vector<std::string> words = split_words(desc);
  std::vector<std::string> chunks;
  for (size_t i = 0; i < words.size(); i += kChunkWords) {
    std::string c;
    for (size_t j = i; j < std::min(i + kChunkWords, words.size()); ++j) {
      if (!c.empty()) c += ' ';
      c += words[j];
    }
    chunks.push_back(std::move(c));
  }
  return chunks;
}

}  // namespace

std::vector<Example> split_augment(const std::vector<Example>& examples,
                                   int64_t cap) {
  if (cap < 1) throw UsageError("split_augment: cap must be >= 1");
  std::vector<Example> out;
  out.reserve(examples.size());
  for (const Example& e : examples) {
    out.push_back(e);
    if (!e.esci_label || (*e.esci_label != EsciLabel::Complement &&
                          *e.esci_label != EsciLabel::Irrelevant))
      continue;
    std::vector<std::string> fragments;
    for (const std::string& b : e.bullet_points)
      if (!normalize(b).empty()) fragments.push_back(b);
    for (std::string& c : desc_chunks(e.description))
      fragments.push_back(std::move(c));
    int64_t k = 0;
    for (const std::string& frag : fragments) {
      if (k >= cap) break;
      ++k;
      Example d;
      d.example_id = e.example_id + "#" + std::to_string(k);
      d.query = e.query;
      d.product_id = e.product_id;
      d.title = frag;
      d.brand = e.brand;
      d.color = e.color;
      d.locale = e.locale;
      d.esci_label = e.esci_label;
      out.push_back(std::move(d));
    }
  }
  return out;
}

std::pair<std::vector<int32_t>, std::vector<std::pair<int32_t, int32_t>>>
mask_for_mlm(const std::vector<int32_t>& tokens, Rng& rng, double rate,
             const Vocabulary& v) {
  if (rate < 0.0 || rate > 1.0)
    throw UsageError("mask_for_mlm: rate must be in [0, 1]");
  std::vector<int32_t> masked = tokens;
  std::vector<std::pair<int32_t, int32_t>> targets;
  int32_t regular = v.size() - Vocabulary::kNumSpecials;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < Vocabulary::kNumSpecials) continue;
    if (rng.uniform01() >= rate) continue;
    targets.emplace_back(static_cast<int32_t>(i), tokens[i]);
    double branch = rng.uniform01();
    if (branch < 0.8 || regular <= 0) {
      masked[i] = Vocabulary::kMask;
    } else if (branch < 0.9) {
      masked[i] = Vocabulary::kNumSpecials +
                  static_cast<int32_t>(
                      rng.uniform_int(static_cast<uint64_t>(regular)));
    }
    // else: left unchanged, still a prediction target
  }
  return {std::move(masked), std::move(targets)};
}

std::vector<TaskBatch> mix_task_batches(
    const std::vector<PretrainInstance>& instances, int64_t batch_size,
    Rng& rng) {
  if (batch_size < 1)
    throw UsageError("mix_task_batches: batch_size must be >= 1");
  constexpr std::array<TaskTag, 5> kTags = {TaskTag::MLM, TaskTag::P2Q,
                                            TaskTag::P2BRAND, TaskTag::P2COLOR,
                                            TaskTag::CONTRAST};
  std::array<std::vector<size_t>, 5> by_tag;
  for (size_t i = 0; i < instances.size(); ++i)
    by_tag[static_cast<size_t>(instances[i].tag)].push_back(i);

  std::array<std::vector<TaskBatch>, 5> per_tag_batches;
  std::vector<size_t> order_tokens;
  for (size_t t = 0; t < kTags.size(); ++t) {
    rng.shuffle(by_tag[t]);
    const std::vector<size_t>& pool = by_tag[t];
    for (size_t off = 0; off < pool.size();
         off += static_cast<size_t>(batch_size)) {
      TaskBatch b;
      b.tag = kTags[t];
      size_t end = std::min(pool.size(), off + static_cast<size_t>(batch_size));
      b.idx.assign(pool.begin() + static_cast<long>(off),
                   pool.begin() + static_cast<long>(end));
      per_tag_batches[t].push_back(std::move(b));
      order_tokens.push_back(t);
    }
  }
  rng.shuffle(order_tokens);
  std::array<size_t, 5> cursor = {0, 0, 0, 0, 0};
  std::vector<TaskBatch> out;
  out.reserve(order_tokens.size());
  for (size_t t : order_tokens)
    out.push_back(std::move(per_tag_batches[t][cursor[t]++]));
  return out;
}

std::vector<PretrainInstance> build_pretrain_instances(
    const std::vector<ProductRecord>& products, const Vocabulary& v,
    const ValueVocab& brands, const ValueVocab& colors,
    const InstanceConfig& cfg) {
  std::vector<PretrainInstance> out;
  int64_t n = static_cast<int64_t>(products.size());
  for (int64_t i = 0; i < n; ++i) {
    const ProductRecord& p = products[static_cast<size_t>(i)];
    Rng rng(derive_seed(cfg.seed, "instance", static_cast<uint64_t>(i)));
    std::string text = product_text(p);
    std::vector<int32_t> wrapped = tokenize(text, v, cfg.max_len);

    if (cfg.tasks.mlm) {
      auto [masked, targets] = mask_for_mlm(wrapped, rng, cfg.mask_rate, v);
      if (!targets.empty()) {
        PretrainInstance inst;
        inst.tag = TaskTag::MLM;
        inst.input = std::move(masked);
        inst.mlm_targets = std::move(targets);
        out.push_back(std::move(inst));
      }
    }

    if (cfg.tasks.p2q) {
      double mu = p.locale == Locale::jp
                      ? cfg.mu_jp
                      : (p.locale == Locale::es ? cfg.mu_es : cfg.mu_us);
      std::string fq = sample_fake_query(p, rng, mu);
      PretrainInstance pos;
      pos.tag = TaskTag::P2Q;
      pos.input = tokenize_pair(fq, text, v, cfg.max_len);
      pos.label = 1;
      out.push_back(std::move(pos));
      if (n > 1) {
        // Negative pair: the same fake query against a different product.
        int64_t j = static_cast<int64_t>(
            rng.uniform_int(static_cast<uint64_t>(n - 1)));
        if (j >= i) ++j;
        PretrainInstance neg;
        neg.tag = TaskTag::P2Q;
        neg.input = tokenize_pair(
            fq, product_text(products[static_cast<size_t>(j)]), v,
            cfg.max_len);
        neg.label = 0;
        out.push_back(std::move(neg));
      }
    }

    if (cfg.tasks.p2brand && !p.brand.empty()) {
      PretrainInstance inst;
      inst.tag = TaskTag::P2BRAND;
      inst.input = wrapped;
      inst.label = brands.id_of(p.brand);
      out.push_back(std::move(inst));
    }

    if (cfg.tasks.p2color && !p.color.empty()) {
      PretrainInstance inst;
      inst.tag = TaskTag::P2COLOR;
      inst.input = wrapped;
      inst.label = colors.id_of(p.color);
      out.push_back(std::move(inst));
    }

    if (cfg.tasks.contrast) {
      // Two dropout passes of the same text form the positive pair, so
      // both views carry identical ids.
      PretrainInstance inst;
      inst.tag = TaskTag::CONTRAST;
      inst.input = wrapped;
      inst.paired = wrapped;
      out.push_back(std::move(inst));
    }
  }
  return out;
}

}  // namespace relkit::corpus
