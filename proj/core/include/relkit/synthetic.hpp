#pragma once

#include <cstdint>
#include <vector>

#include "relkit/data.hpp"

namespace relkit::corpus {

// Rule-based corpus with planted token signals, so relevance labels are
// a deterministic function of the text. Categories form a ring: a
// product of category c says "pairs with <next category word>" in its
// bullets. A query is "<category word> <model token>" built from an
// anchor product. Label rules for a query of category c with model m:
//   Exact       same category and the title carries m
//   Substitute  same category, different model
//   Complement  the product's partner category is c
//   Irrelevant  anything else
// Titles carry brand, category word, model token and color; the
// description repeats brand and color but never the model token.
struct SynthConfig {
  int64_t n_products = 200;
  int64_t n_categories = 8;   // at least 3, so Irrelevant is non-empty
  int64_t n_brands = 12;
  int64_t n_colors = 8;
  int64_t n_queries = 400;    // 5 examples each: E, 2xS, C, I
  double flip_fraction = 0.0; // labeled-set label corruption
  uint64_t seed = 0;

  void validate() const;  // ConfigError on out-of-range fields
};

std::vector<ProductRecord> make_catalogue(const SynthConfig& cfg);

struct LabeledSet {
  std::vector<Example> examples;
  std::vector<int64_t> flipped;  // ascending indices of corrupted labels
};

// Queries over the generated catalogue, five examples per query. When
// flip_fraction > 0, floor(fraction * n) labels are rewritten to a
// different class and their indices recorded.
LabeledSet make_labeled(const SynthConfig& cfg);

}  // namespace relkit::corpus
