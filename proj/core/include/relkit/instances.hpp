#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "relkit/data.hpp"
#include "relkit/rng.hpp"
#include "relkit/vocab.hpp"

namespace relkit::corpus {

enum class TaskTag { MLM, P2Q, P2BRAND, P2COLOR, CONTRAST };
std::string to_string(TaskTag t);

// One multitask pre-training example. `input` is a wrapped id sequence;
// the payload field that matters depends on the tag: mlm_targets for
// MLM, label for the classification tags, paired for CONTRAST.
struct PretrainInstance {
  TaskTag tag = TaskTag::MLM;
  std::vector<int32_t> input;
  std::vector<std::pair<int32_t, int32_t>> mlm_targets;  // (position, original id)
  int32_t label = -1;
  std::vector<int32_t> paired;
};

// A window of the product's text: k ~ Poisson(mu) clamped to [1, token
// count], uniform start. Products whose text has no tokens are an error.
std::string sample_fake_query(const ProductRecord& p, Rng& rng, double mu);

// Class-balancing augmentation: Complement/Irrelevant examples spawn up
// to `cap` derived copies, one per non-empty bullet and one per
// description chunk of <= 32 words; each derived copy keeps the query,
// label and locale and carries the fragment as its title. Originals are
// always retained; other labels pass through untouched.
std::vector<Example> split_augment(const std::vector<Example>& examples,
                                   int64_t cap);

// Independent per-position masking at `rate` (specials never selected);
// selected positions go 80% [MASK] / 10% random regular id / 10% kept.
std::pair<std::vector<int32_t>, std::vector<std::pair<int32_t, int32_t>>>
mask_for_mlm(const std::vector<int32_t>& tokens, Rng& rng, double rate,
             const Vocabulary& v);

struct TaskBatch {
  TaskTag tag = TaskTag::MLM;
  std::vector<size_t> idx;  // indices into the instance list
};

// Seeded epoch plan: shuffle within each task, chunk into batches, then
// interleave the tasks in random order. Every instance appears exactly
// once and every batch is task-homogeneous.
std::vector<TaskBatch> mix_task_batches(
    const std::vector<PretrainInstance>& instances, int64_t batch_size,
    Rng& rng);

struct PretrainTasks {
  bool mlm = true;
  bool p2q = true;
  bool p2brand = true;
  bool p2color = true;
  bool contrast = true;
};

struct InstanceConfig {
  double mask_rate = 0.15;
  double mu_us = 4.0;
  double mu_es = 4.0;
  double mu_jp = 8.0;
  int64_t max_len = 128;
  uint64_t seed = 0;
  PretrainTasks tasks;
};

// Builds the full multitask instance list for a catalogue: per product,
// an MLM instance, a positive and a negative fake-query pair, brand and
// color targets where the fields are present, and a contrastive view
// pair. Deterministic in (catalogue order, seed).
std::vector<PretrainInstance> build_pretrain_instances(
    const std::vector<ProductRecord>& products, const Vocabulary& v,
    const ValueVocab& brands, const ValueVocab& colors,
    const InstanceConfig& cfg);

}  // namespace relkit::corpus
