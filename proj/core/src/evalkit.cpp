#include "relkit/evalkit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "relkit/errors.hpp"
#include "relkit/rng.hpp"

namespace relkit::evalkit {

void sort_ranked(RankedList& list) {
  for (const auto& it : list.items)
    if (!std::isfinite(it.score))
      throw DataError("ranked list: non-finite score for product " +
                      it.product_id);
  std::stable_sort(list.items.begin(), list.items.end(),
                   [](const RankedItem& a, const RankedItem& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.product_id < b.product_id;
                   });
}

namespace {

double dcg_at(const std::vector<double>& gains, int64_t k) {
  double s = 0.0;
  for (int64_t r = 1; r <= k; ++r)
    s += gains[static_cast<size_t>(r - 1)] / std::log2(double(r) + 1.0);
  return s;
}

}  // namespace

double ndcg(const std::vector<double>& gains, std::optional<int64_t> k) {
  if (gains.empty()) throw UsageError("ndcg: empty gains list");
  int64_t n = static_cast<int64_t>(gains.size());
  int64_t kk = k.value_or(n);
  if (kk < 1) throw UsageError("ndcg: k must be >= 1");
  kk = std::min(kk, n);
  bool any_positive = false;
  for (double g : gains)
    if (g > 0.0) any_positive = true;
  if (!any_positive) return 0.0;
  std::vector<double> ideal = gains;
  std::sort(ideal.begin(), ideal.end(), std::greater<double>());
  return dcg_at(gains, kk) / dcg_at(ideal, kk);
}

double micro_f1(const std::vector<int32_t>& pred,
                const std::vector<int32_t>& gold) {
  if (pred.empty()) throw UsageError("micro_f1: empty input");
  if (pred.size() != gold.size())
    throw UsageError("micro_f1: prediction/gold length mismatch");
  std::set<int32_t> classes(pred.begin(), pred.end());
  classes.insert(gold.begin(), gold.end());
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  for (int32_t c : classes) {
    for (size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] == c && gold[i] == c) ++tp;
      if (pred[i] == c && gold[i] != c) ++fp;
      if (pred[i] != c && gold[i] == c) ++fn;
    }
  }
  return double(tp) / (double(tp) + 0.5 * double(fp + fn));
}

std::vector<double> ensemble_mean(
    const std::vector<std::vector<double>>& lists) {
  if (lists.empty()) throw UsageError("ensemble_mean: no score lists");
  size_t n = lists[0].size();
  for (const auto& l : lists)
    if (l.size() != n) throw ShapeError("ensemble_mean: ragged score lists");
  std::vector<double> out(n, 0.0);
  for (const auto& l : lists)
    for (size_t i = 0; i < n; ++i) out[i] += l[i];
  for (double& x : out) x /= double(lists.size());
  return out;
}

std::vector<std::vector<int64_t>> kfold_split(int64_t n, int64_t k,
                                              const std::vector<int32_t>& labels,
                                              uint64_t seed,
                                              std::vector<int32_t>* warnings) {
  if (k < 2) throw UsageError("kfold: k must be >= 2");
  if (k > n) throw UsageError("kfold: k exceeds the number of examples");
  if (static_cast<int64_t>(labels.size()) != n)
    throw ShapeError("kfold: labels length must equal n");

  std::map<int32_t, std::vector<int64_t>> by_class;
  for (int64_t i = 0; i < n; ++i) by_class[labels[static_cast<size_t>(i)]].push_back(i);

  Rng rng(derive_seed(seed, "kfold"));
  std::vector<std::vector<int64_t>> folds(static_cast<size_t>(k));
  int64_t cursor = 0;
  std::vector<int64_t> pool;  // members of classes too small to stratify
  for (auto& [label, idx] : by_class) {
    if (static_cast<int64_t>(idx.size()) < k) {
      if (warnings) warnings->push_back(label);
      pool.insert(pool.end(), idx.begin(), idx.end());
      continue;
    }
    rng.shuffle(idx);
    for (int64_t i : idx) folds[static_cast<size_t>(cursor++ % k)].push_back(i);
  }
  rng.shuffle(pool);
  for (int64_t i : pool) folds[static_cast<size_t>(cursor++ % k)].push_back(i);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

namespace {

std::string num_str(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "config,metric,delta\n";
  for (size_t i = 0; i < rows.size(); ++i) {
    out += csv_field(rows[i].config);
    out += ',';
    out += num_str(rows[i].metric);
    out += ',';
    if (i > 0) out += num_str(rows[i].metric - rows[i - 1].metric);
    out += '\n';
  }
  return out;
}

std::string ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (size_t i = 0; i < rows.size(); ++i) {
    nlohmann::json row;
    row["config"] = rows[i].config;
    row["metric"] = rows[i].metric;
    if (i > 0) row["delta"] = rows[i].metric - rows[i - 1].metric;
    arr.push_back(row);
  }
  return arr.dump(2) + "\n";
}

}  // namespace relkit::evalkit
