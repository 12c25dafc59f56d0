#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace relkit::evalkit {

struct RankedItem {
  std::string product_id;
  double score = 0.0;
  std::optional<double> gain;  // gold gain when known
};

// One query's result list. After sort_ranked the items are in descending
// score order with product-id tie-break, so equal scores still yield one
// reproducible ordering.
struct RankedList {
  std::string query_id;
  std::vector<RankedItem> items;
};

// Enforces the RankedList ordering invariant. Non-finite scores are a
// DataError.
void sort_ranked(RankedList& list);

// Normalized DCG with a log2(r+1) discount over the first k positions
// (whole list when k is omitted). A list without a single positive gain
// scores 0 by convention; an empty list is a UsageError.
double ndcg(const std::vector<double>& gains_in_predicted_order,
            std::optional<int64_t> k = std::nullopt);

// Pooled-count micro F1: TP / (TP + (FP + FN) / 2) over every class that
// appears. For single-label predictions this equals plain accuracy.
double micro_f1(const std::vector<int32_t>& pred,
                const std::vector<int32_t>& gold);

// Elementwise mean of M equal-length score lists.
std::vector<double> ensemble_mean(
    const std::vector<std::vector<double>>& lists);

// Stratified k-fold split of indices 0..n-1. Each class is shuffled and
// dealt round-robin through one global cursor, so fold sizes differ by
// at most one overall and per class. Classes with fewer than k members
// fall back to one unstratified pool; their labels are appended to
// `warnings` when it is given.
std::vector<std::vector<int64_t>> kfold_split(
    int64_t n, int64_t k, const std::vector<int32_t>& labels, uint64_t seed,
    std::vector<int32_t>* warnings = nullptr);

struct AblationRow {
  std::string config;
  double metric = 0.0;
};

// Accumulated-configuration table: config,metric,delta with delta
// measured against the previous row (blank on the first).
std::string ablation_csv(const std::vector<AblationRow>& rows);
std::string ablation_json(const std::vector<AblationRow>& rows);

}  // namespace relkit::evalkit
