#include "relkit/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace relkit::objectives {

void ContrastiveConfig::validate() const {
  if (temperature <= 0.0)
    throw ConfigError("contrastive: temperature must be positive");
  if (queue_capacity < 0)
    throw ConfigError("contrastive: queue capacity must be >= 0");
  if (momentum < 0.0 || momentum > 1.0)
    throw ConfigError("contrastive: momentum must be in [0, 1]");
}

void momentum_init(MomentumQueue& q, const ParamStore& online,
                   const encoder::EncoderConfig& enc,
                   const ContrastiveConfig& cfg) {
  cfg.validate();
  q.capacity = cfg.queue_capacity;
  q.entries.clear();
  q.shadow = ParamStore{};
  for (const std::string& name : encoder::encoder_param_names(enc))
    q.shadow.add(name, online.get(name), false);
  q.initialized = true;
}

Var contrastive_loss(Tape& tape, Var h, Var h_plus,
                     const std::deque<Tensor>& queue,
                     const ContrastiveConfig& cfg) {
  cfg.validate();
  const Tensor& hv = tape.val(h);
  if (hv.rank() != 2 || !tape.val(h_plus).same_shape(hv))
    throw ShapeError("contrastive: h and h_plus must be matching [N x d]");
  int64_t n = hv.shape[0], d = hv.shape[1];

  Var hn = tape.l2_normalize_rows(h);
  Var pn = tape.l2_normalize_rows(h_plus);
  Var logits = tape.matmul_nt(hn, pn);  // [n x n] cosines
  int64_t cols = n;
  if (!queue.empty()) {
    Tensor qm = Tensor::zeros({static_cast<int64_t>(queue.size()), d});
    int64_t r = 0;
    for (const Tensor& e : queue) {
      if (e.numel() != d) throw ShapeError("contrastive: queue entry width");
      double norm = 0.0;
      for (int64_t j = 0; j < d; ++j) norm += e[j] * e[j];
      if (norm == 0.0) throw UsageError("contrastive: zero-norm queue entry");
      norm = std::sqrt(norm);
      for (int64_t j = 0; j < d; ++j) qm.at(r, j) = e[j] / norm;
      ++r;
    }
    Var lq = tape.matmul_nt(hn, tape.constant(std::move(qm)));
    std::vector<Var> parts = {logits, lq};
    logits = tape.concat_cols(parts);
    cols += static_cast<int64_t>(queue.size());
  }
  Var logp = tape.log_softmax_rows(tape.scale(logits, 1.0 / cfg.temperature));
  std::vector<Var> diag;
  diag.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    diag.push_back(tape.select(logp, i * cols + i));
  return tape.scale(tape.sum_of(diag), -1.0 / static_cast<double>(n));
}

void queue_update(MomentumQueue& q, const ParamStore& online,
                  const std::vector<std::vector<int32_t>>& views,
                  const encoder::EncoderConfig& enc,
                  const ContrastiveConfig& cfg) {
  if (!q.initialized) throw UsageError("queue_update: queue not initialized");
  double m = cfg.momentum;
  for (auto& entry : q.shadow.entries) {
    const Tensor& live = online.get(entry.name);
    if (!live.same_shape(entry.value))
      throw ShapeError("queue_update: parameter shape changed: " + entry.name);
    for (size_t i = 0; i < entry.value.v.size(); ++i)
      entry.value.v[i] = m * entry.value.v[i] + (1.0 - m) * live.v[i];
  }
  if (q.capacity == 0) return;
  for (const auto& ids : views) {
    Tape tape;
    LeafMap leaves = numerics::leaf_all(tape, q.shadow);
    encoder::EncodeResult r =
        encoder::encode(tape, leaves, enc, ids, /*train=*/false, 0);
    q.entries.push_back(tape.val(r.cls));
    while (static_cast<int64_t>(q.entries.size()) > q.capacity)
      q.entries.pop_front();
  }
}

Var mlm_loss(Tape& tape, Var logits, const std::vector<int32_t>& targets) {
  if (targets.empty()) return tape.constant(Tensor::scalar(0.0));
  const Tensor& lv = tape.val(logits);
  if (lv.rank() != 2 ||
      lv.shape[0] != static_cast<int64_t>(targets.size()))
    throw ShapeError("mlm_loss: logits rows must match target count");
  int64_t vsize = lv.shape[1];
  Var logp = tape.log_softmax_rows(logits);
  std::vector<Var> picks;
  picks.reserve(targets.size());
  for (size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] < 0 || targets[r] >= vsize)
      throw IndexError("mlm_loss: target id out of range");
    picks.push_back(tape.select(
        logp, static_cast<int64_t>(r) * vsize + targets[r]));
  }
  return tape.scale(tape.sum_of(picks),
                    -1.0 / static_cast<double>(targets.size()));
}

LossKind parse_loss_kind(const std::string& s) {
  if (s == "ce") return LossKind::CE;
  if (s == "focal") return LossKind::FOCAL;
  if (s == "ghm") return LossKind::GHM;
  if (s == "poly1") return LossKind::POLY1;
  throw ConfigError("unknown loss kind '" + s + "'");
}

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::CE: return "ce";
    case LossKind::FOCAL: return "focal";
    case LossKind::GHM: return "ghm";
    case LossKind::POLY1: return "poly1";
  }
  throw UsageError("bad loss kind");
}

Var classification_loss(Tape& tape, Var logits,
                        const std::vector<int32_t>& targets, LossKind kind,
                        const LossParams& params) {
  const Tensor& lv = tape.val(logits);
  if (lv.rank() != 2 ||
      lv.shape[0] != static_cast<int64_t>(targets.size()) || targets.empty())
    throw ShapeError("classification_loss: logits rows must match targets");
  int64_t n = lv.shape[0], k = lv.shape[1];
  if (k < 2) throw ShapeError("classification_loss: need at least 2 classes");
  for (int32_t t : targets)
    if (t < 0 || t >= k)
      throw IndexError("classification_loss: target out of range");

  Var logp = tape.log_softmax_rows(logits);
  const Tensor& lpv = tape.val(logp);

  std::vector<double> weights;  // GHM per-example constants
  if (kind == LossKind::GHM) {
    if (params.ghm_bins < 1)
      throw ConfigError("classification_loss: ghm_bins must be >= 1");
    int64_t m = params.ghm_bins;
    std::vector<int64_t> bin_of(static_cast<size_t>(n));
    std::vector<int64_t> counts(static_cast<size_t>(m), 0);
    for (int64_t i = 0; i < n; ++i) {
      double pt = std::exp(lpv[i * k + targets[static_cast<size_t>(i)]]);
      double g = std::abs(1.0 - pt);
      int64_t b = std::min<int64_t>(m - 1,
                                    static_cast<int64_t>(g * static_cast<double>(m)));
      bin_of[static_cast<size_t>(i)] = b;
      counts[static_cast<size_t>(b)] += 1;
    }
    weights.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
      weights[static_cast<size_t>(i)] =
          static_cast<double>(n) /
          (static_cast<double>(counts[static_cast<size_t>(bin_of[static_cast<size_t>(i)])]) *
           static_cast<double>(m));
  }

  std::vector<Var> terms;
  terms.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    Var lp_t = tape.select(logp, i * k + targets[static_cast<size_t>(i)]);
    Var ce = tape.scale(lp_t, -1.0);
    switch (kind) {
      case LossKind::CE:
        terms.push_back(ce);
        break;
      case LossKind::GHM:
        terms.push_back(tape.scale(ce, weights[static_cast<size_t>(i)]));
        break;
      case LossKind::FOCAL: {
        // (1 - p_t)^gamma * CE
        Var one_minus = tape.add_scalar(tape.scale(tape.exp_(lp_t), -1.0), 1.0);
        terms.push_back(
            tape.mul(tape.pow_(one_minus, params.focal_gamma), ce));
        break;
      }
      case LossKind::POLY1: {
        Var one_minus = tape.add_scalar(tape.scale(tape.exp_(lp_t), -1.0), 1.0);
        terms.push_back(tape.add(ce, tape.scale(one_minus, params.poly1_eps)));
        break;
      }
    }
  }
  return tape.scale(tape.sum_of(terms), 1.0 / static_cast<double>(n));
}

Var soft_target_loss(Tape& tape, Var logits, const Tensor& targets) {
  const Tensor& lv = tape.val(logits);
  if (!lv.same_shape(targets))
    throw ShapeError("soft_target_loss: logits/targets shape mismatch");
  int64_t n = lv.shape[0];
  Var logp = tape.log_softmax_rows(logits);
  Var weighted = tape.cmul(logp, targets);
  return tape.scale(tape.sum(weighted), -1.0 / static_cast<double>(n));
}

Var rdrop_loss(Tape& tape, Var logits1, Var logits2, double alpha) {
  if (alpha < 0.0) throw UsageError("rdrop_loss: alpha must be >= 0");
  const Tensor& l1 = tape.val(logits1);
  if (!tape.val(logits2).same_shape(l1))
    throw ShapeError("rdrop_loss: logit shapes differ");
  int64_t n = l1.rows();
  Var s1 = tape.softmax_rows(logits1);
  Var s2 = tape.softmax_rows(logits2);
  Var lp1 = tape.log_softmax_rows(logits1);
  Var lp2 = tape.log_softmax_rows(logits2);
  Var kl12 = tape.sum(tape.mul(s1, tape.sub(lp1, lp2)));
  Var kl21 = tape.sum(tape.mul(s2, tape.sub(lp2, lp1)));
  return tape.scale(tape.add(kl12, kl21),
                    alpha / static_cast<double>(n));
}

Var pretrain_total_loss(Tape& tape, const std::vector<Var>& parts) {
  if (parts.empty()) return tape.constant(Tensor::scalar(0.0));
  return tape.sum_of(parts);
}

}  // namespace relkit::objectives
