#include "relkit/confident.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <set>

#include "relkit/errors.hpp"
#include "relkit/evalkit.hpp"
#include "relkit/rng.hpp"
#include "relkit/text.hpp"

namespace relkit::confident {

namespace {

void check_probs(const std::vector<std::vector<double>>& probs,
                 const std::vector<int32_t>& labels, int64_t n_classes) {
  if (probs.empty()) throw UsageError("confident: empty probability matrix");
  if (probs.size() != labels.size())
    throw ShapeError("confident: probs/labels length mismatch");
  if (n_classes < 1) throw UsageError("confident: need at least one class");
  for (size_t i = 0; i < probs.size(); ++i) {
    if (static_cast<int64_t>(probs[i].size()) != n_classes)
      throw ShapeError("confident: probability row " + std::to_string(i) +
                       " has the wrong width");
    if (labels[i] < 0 || labels[i] >= n_classes)
      throw IndexError("confident: label out of range at row " +
                       std::to_string(i));
  }
}

// j* for one example: highest probability among qualifying classes,
// ties to the lower class id; -1 when nothing qualifies.
int32_t assign_class(const std::vector<double>& p,
                     const std::vector<double>& t) {
  int32_t best = -1;
  double best_p = 0.0;
  for (size_t j = 0; j < p.size(); ++j) {
    if (p[j] < t[j]) continue;
    if (best == -1 || p[j] > best_p) {
      best = static_cast<int32_t>(j);
      best_p = p[j];
    }
  }
  return best;
}

}  // namespace

std::vector<std::vector<double>> oof_probs(int64_t n,
                                           const std::vector<int32_t>& labels,
                                           int64_t k_folds, uint64_t seed,
                                           const TrainFn& train_fn) {
  if (n < 1) throw UsageError("oof: empty dataset");
  if (static_cast<int64_t>(labels.size()) != n)
    throw ShapeError("oof: labels length must equal n");
  if (!train_fn) throw UsageError("oof: missing train function");
  auto folds = evalkit::kfold_split(n, k_folds, labels, seed);

  std::set<int32_t> classes(labels.begin(), labels.end());
  std::vector<std::vector<double>> probs(static_cast<size_t>(n));
  for (size_t f = 0; f < folds.size(); ++f) {
    std::vector<char> held(static_cast<size_t>(n), 0);
    for (int64_t i : folds[f]) held[static_cast<size_t>(i)] = 1;
    std::vector<int64_t> train_idx;
    train_idx.reserve(static_cast<size_t>(n) - folds[f].size());
    for (int64_t i = 0; i < n; ++i)
      if (!held[static_cast<size_t>(i)]) train_idx.push_back(i);

    std::set<int32_t> seen;
    for (int64_t i : train_idx) seen.insert(labels[static_cast<size_t>(i)]);
    for (int32_t c : classes)
      if (!seen.count(c))
        throw DataError("oof: class " + std::to_string(c) +
                        " is absent from the training split of fold " +
                        std::to_string(f));

    auto predict = train_fn(train_idx);
    for (int64_t i : folds[f]) {
      std::vector<double> p = predict(i);
      if (p.empty())
        throw DataError("oof: empty probability row for example " +
                        std::to_string(i));
      double sum = 0.0;
      for (double x : p) {
        if (!(x >= -1e-12))
          throw DataError("oof: negative probability for example " +
                          std::to_string(i));
        sum += x;
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw DataError("oof: probabilities for example " + std::to_string(i) +
                        " sum to " + std::to_string(sum));
      probs[static_cast<size_t>(i)] = std::move(p);
    }
  }
  return probs;
}

std::vector<double> class_thresholds(
    const std::vector<std::vector<double>>& probs,
    const std::vector<int32_t>& labels, int64_t n_classes) {
  check_probs(probs, labels, n_classes);
  std::vector<double> sum(static_cast<size_t>(n_classes), 0.0);
  std::vector<int64_t> count(static_cast<size_t>(n_classes), 0);
  for (size_t i = 0; i < probs.size(); ++i) {
    auto j = static_cast<size_t>(labels[i]);
    sum[j] += probs[i][j];
    count[j] += 1;
  }
  std::vector<double> t(static_cast<size_t>(n_classes));
  for (size_t j = 0; j < t.size(); ++j) {
    if (count[j] == 0)
      throw DataError("thresholds: class " + std::to_string(j) +
                      " has no examples");
    t[j] = sum[j] / static_cast<double>(count[j]);
  }
  return t;
}

std::vector<std::vector<int64_t>> confident_joint(
    const std::vector<std::vector<double>>& probs,
    const std::vector<int32_t>& labels,
    const std::vector<double>& thresholds) {
  auto n_classes = static_cast<int64_t>(thresholds.size());
  check_probs(probs, labels, n_classes);
  std::vector<std::vector<int64_t>> joint(
      static_cast<size_t>(n_classes),
      std::vector<int64_t>(static_cast<size_t>(n_classes), 0));
  for (size_t i = 0; i < probs.size(); ++i) {
    int32_t j = assign_class(probs[i], thresholds);
    if (j >= 0)
      joint[static_cast<size_t>(labels[i])][static_cast<size_t>(j)] += 1;
  }
  return joint;
}

NoiseEstimate estimate_noise(const std::vector<std::vector<double>>& probs,
                             const std::vector<int32_t>& labels,
                             int64_t n_classes) {
  check_probs(probs, labels, n_classes);
  NoiseEstimate est;
  est.thresholds = class_thresholds(probs, labels, n_classes);
  est.joint = confident_joint(probs, labels, est.thresholds);
  est.assigned.resize(probs.size());
  est.margin.resize(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) {
    est.assigned[i] = assign_class(probs[i], est.thresholds);
    double given = probs[i][static_cast<size_t>(labels[i])];
    double best_other = 0.0;
    bool any = false;
    for (size_t j = 0; j < probs[i].size(); ++j) {
      if (static_cast<int32_t>(j) == labels[i]) continue;
      if (!any || probs[i][j] > best_other) best_other = probs[i][j];
      any = true;
    }
    est.margin[i] = any ? given - best_other : given;
  }
  return est;
}

PruneResult prune(const NoiseEstimate& est, const std::vector<int32_t>& labels,
                  double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw UsageError("prune: fraction must lie in [0, 1]");
  size_t n = labels.size();
  if (est.assigned.size() != n || est.margin.size() != n)
    throw ShapeError("prune: estimate does not match the dataset size");

  std::vector<int64_t> candidates;
  for (size_t i = 0; i < n; ++i)
    if (est.assigned[i] >= 0 && est.assigned[i] != labels[i])
      candidates.push_back(static_cast<int64_t>(i));
  std::sort(candidates.begin(), candidates.end(),
            [&](int64_t a, int64_t b) {
              double ma = est.margin[static_cast<size_t>(a)];
              double mb = est.margin[static_cast<size_t>(b)];
              if (ma != mb) return ma < mb;
              return a < b;
            });
  auto budget = static_cast<size_t>(
      std::floor(fraction * static_cast<double>(n)));
  size_t take = std::min(budget, candidates.size());

  PruneResult r;
  r.removed.assign(candidates.begin(),
                   candidates.begin() + static_cast<int64_t>(take));
  r.mask.assign(n, false);
  for (int64_t i : r.removed) r.mask[static_cast<size_t>(i)] = true;
  for (size_t i = 0; i < n; ++i)
    if (!r.mask[i]) r.kept.push_back(static_cast<int64_t>(i));
  return r;
}

CleanReport run_confident_pipeline(int64_t n,
                                   const std::vector<int32_t>& labels,
                                   int64_t n_classes, int64_t k_folds,
                                   uint64_t seed, const TrainFn& train_fn,
                                   double fraction) {
  CleanReport rep;
  rep.probs = oof_probs(n, labels, k_folds, seed, train_fn);
  rep.estimate = estimate_noise(rep.probs, labels, n_classes);
  rep.pruned = prune(rep.estimate, labels, fraction);
  return rep;
}

std::vector<int64_t> LinearProbe::features(const corpus::Example& ex,
                                           int64_t buckets) {
  auto bucket = [buckets](const std::string& s) {
    return static_cast<int64_t>(corpus::fnv1a64(s) %
                                static_cast<uint64_t>(buckets));
  };
  std::vector<std::string> q = corpus::split_words(corpus::normalize(ex.query));
  std::vector<std::string> t = corpus::split_words(corpus::normalize(ex.title));
  std::vector<int64_t> out;
  out.reserve(q.size() + t.size() + q.size() * t.size() + 2);
  for (const auto& w : q) out.push_back(bucket("q:" + w));
  for (const auto& w : t) out.push_back(bucket("t:" + w));
  int64_t shared = 0;
  for (const auto& qw : q) {
    for (const auto& tw : t) out.push_back(bucket("x:" + qw + "|" + tw));
    if (std::find(t.begin(), t.end(), qw) != t.end()) shared += 1;
  }
  out.push_back(bucket("o:" + std::to_string(std::min<int64_t>(shared, 6))));
  if (!ex.brand.empty()) out.push_back(bucket("b:" + corpus::normalize(ex.brand)));
  if (!ex.color.empty()) out.push_back(bucket("c:" + corpus::normalize(ex.color)));
  return out;
}

void LinearProbe::fit(const std::vector<corpus::Example>& xs,
                      const std::vector<int32_t>& labels,
                      const std::vector<int64_t>& train_idx,
                      int64_t classes, const LinearProbeConfig& cfg) {
  if (xs.size() != labels.size())
    throw ShapeError("probe: examples/labels length mismatch");
  if (classes < 2) throw UsageError("probe: need at least two classes");
  if (cfg.buckets < 1) throw UsageError("probe: buckets must be positive");
  buckets = cfg.buckets;
  n_classes = classes;
  w.assign(static_cast<size_t>(buckets * classes), 0.0);

  std::vector<std::vector<int64_t>> feats(train_idx.size());
  for (size_t k = 0; k < train_idx.size(); ++k)
    feats[k] = features(xs[static_cast<size_t>(train_idx[k])], buckets);

  std::vector<size_t> order(train_idx.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::vector<double> logits(static_cast<size_t>(classes));
  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, "probe", static_cast<uint64_t>(epoch)));
    rng.shuffle(order);
    for (size_t k : order) {
      const auto& fs = feats[k];
      int32_t y = labels[static_cast<size_t>(train_idx[k])];
      for (int64_t c = 0; c < classes; ++c) {
        double s = 0.0;
        for (int64_t f : fs)
          s += w[static_cast<size_t>(c * buckets + f)];
        logits[static_cast<size_t>(c)] = s;
      }
      double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double& l : logits) {
        l = std::exp(l - mx);
        z += l;
      }
      for (int64_t c = 0; c < classes; ++c) {
        double p = logits[static_cast<size_t>(c)] / z;
        double g = p - (c == y ? 1.0 : 0.0);
        if (g == 0.0) continue;
        double step = cfg.lr * g;
        for (int64_t f : fs) w[static_cast<size_t>(c * buckets + f)] -= step;
      }
    }
  }
}

std::vector<double> LinearProbe::predict(const corpus::Example& ex) const {
  if (w.empty()) throw UsageError("probe: predict before fit");
  auto fs = features(ex, buckets);
  std::vector<double> logits(static_cast<size_t>(n_classes), 0.0);
  for (int64_t c = 0; c < n_classes; ++c)
    for (int64_t f : fs)
      logits[static_cast<size_t>(c)] += w[static_cast<size_t>(c * buckets + f)];
  double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    z += l;
  }
  for (double& l : logits) l /= z;
  return logits;
}

TrainFn linear_probe_trainer(const std::vector<corpus::Example>& xs,
                             const std::vector<int32_t>& labels,
                             int64_t n_classes,
                             const LinearProbeConfig& cfg) {
  return [&xs, labels, n_classes, cfg](const std::vector<int64_t>& train_idx) {
    auto probe = std::make_shared<LinearProbe>();
    probe->fit(xs, labels, train_idx, n_classes, cfg);
    return [probe, &xs](int64_t i) {
      return probe->predict(xs[static_cast<size_t>(i)]);
    };
  };
}

}  // namespace relkit::confident
