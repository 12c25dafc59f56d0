#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "relkit/data.hpp"

namespace relkit::confident {

// Trains a fold model on the given example indices and returns a
// predictor mapping any example index to class probabilities. The
// closure owns whatever feature data it needs, so this module never
// sees the examples themselves.
using TrainFn =
    std::function<std::function<std::vector<double>(int64_t)>(
        const std::vector<int64_t>& train_idx)>;

// Out-of-fold probabilities: every example is scored by a model whose
// training split excluded it. Stratified folds; a class absent from
// some training split is a DataError. Rows are validated to sum to 1
// within 1e-9.
std::vector<std::vector<double>> oof_probs(int64_t n,
                                           const std::vector<int32_t>& labels,
                                           int64_t k_folds, uint64_t seed,
                                           const TrainFn& train_fn);

// t_j = mean of p(j) over the examples whose given label is j. A class
// with no examples is a DataError.
std::vector<double> class_thresholds(
    const std::vector<std::vector<double>>& probs,
    const std::vector<int32_t>& labels, int64_t n_classes);

// Confident joint: an example with given label i counts toward
// C[i][j*], where j* maximizes p(j) among classes with p(j) >= t_j
// (ties by lower class id). Examples with no qualifying class are
// uncounted, so the total mass is at most n.
std::vector<std::vector<int64_t>> confident_joint(
    const std::vector<std::vector<double>>& probs,
    const std::vector<int32_t>& labels, const std::vector<double>& thresholds);

struct NoiseEstimate {
  std::vector<double> thresholds;           // t_j, one per class
  std::vector<std::vector<int64_t>> joint;  // C[given][assigned]
  std::vector<int32_t> assigned;            // j* per example, -1 when none
  std::vector<double> margin;  // p(given) - max over other classes
};

NoiseEstimate estimate_noise(const std::vector<std::vector<double>>& probs,
                             const std::vector<int32_t>& labels,
                             int64_t n_classes);

struct PruneResult {
  std::vector<int64_t> kept;     // ascending indices
  std::vector<int64_t> removed;  // ascending-margin removal order
  std::vector<bool> mask;        // true = removed; one slot per example
};

// Removes the lowest-margin off-diagonal candidates, up to
// floor(fraction * n) of the dataset (margin ties broken by lower
// index). Diagonal and unassigned examples are never candidates.
PruneResult prune(const NoiseEstimate& est, const std::vector<int32_t>& labels,
                  double fraction);

struct CleanReport {
  std::vector<std::vector<double>> probs;
  NoiseEstimate estimate;
  PruneResult pruned;
};

// oof_probs -> estimate_noise -> prune in one call.
CleanReport run_confident_pipeline(int64_t n,
                                   const std::vector<int32_t>& labels,
                                   int64_t n_classes, int64_t k_folds,
                                   uint64_t seed, const TrainFn& train_fn,
                                   double fraction);

// Deterministic hashed bag-of-words softmax classifier used for
// out-of-fold probabilities: cheap, seeded, and independent of the
// neural stack. Features are query tokens, title tokens, query/title
// token pairs, the query/title shared-token count, and the brand and
// color strings.
struct LinearProbeConfig {
  int64_t buckets = 1 << 15;
  int64_t epochs = 10;
  double lr = 0.5;
  uint64_t seed = 0;
};

struct LinearProbe {
  int64_t buckets = 0;
  int64_t n_classes = 0;
  std::vector<double> w;  // [n_classes x buckets], row-major

  static std::vector<int64_t> features(const corpus::Example& ex,
                                       int64_t buckets);

  void fit(const std::vector<corpus::Example>& xs,
           const std::vector<int32_t>& labels,
           const std::vector<int64_t>& train_idx, int64_t n_classes,
           const LinearProbeConfig& cfg);

  std::vector<double> predict(const corpus::Example& ex) const;
};

// TrainFn adapter over a LinearProbe for a fixed example list.
TrainFn linear_probe_trainer(const std::vector<corpus::Example>& xs,
                             const std::vector<int32_t>& labels,
                             int64_t n_classes, const LinearProbeConfig& cfg);

}  // namespace relkit::confident
