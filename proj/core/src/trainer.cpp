#include "relkit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "relkit/errors.hpp"
#include "relkit/evalkit.hpp"
#include "relkit/rng.hpp"

namespace relkit::trainer {

using corpus::Example;
using corpus::PretrainInstance;
using corpus::TaskTag;
using numerics::LeafMap;
using numerics::Tape;
using numerics::Var;

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0))
    throw ConfigError("train: warmup_ratio must lie in [0, 1)");
  if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("train: clip_norm must be positive");
  if (pretrain_epochs < 1)
    throw ConfigError("train: pretrain_epochs must be positive");
  if (finetune_epochs < 1)
    throw ConfigError("train: finetune_epochs must be positive");
  if (!(ema_decay > 0.0 && ema_decay < 1.0))
    throw ConfigError("train: ema_decay must lie in (0, 1)");
  if (!(fgm_epsilon >= 0.0))
    throw ConfigError("train: fgm_epsilon must be >= 0");
  if (!(rdrop_alpha >= 0.0)) throw ConfigError("train: rdrop_alpha must be >= 0");
  if (!(mixup_alpha > 0.0)) throw ConfigError("train: mixup_alpha must be positive");
}

void TrainConfig::validate_finetune() const {
  validate();
  if (toggles.rdrop && !toggles.fgm)
    throw ConfigError(
        "train: rdrop pairs the clean logits with the adversarial ones; "
        "enable fgm");
}

GradMap collect_grads(Tape& tape, const LeafMap& leaves,
                      const ParamStore& params) {
  GradMap g;
  for (const auto& e : params.entries) {
    if (!e.trainable) continue;
    Var v = leaves.at(e.name);
    if (!tape.has_grad(v)) continue;
    g.emplace(e.name, tape.grad(v));
  }
  return g;
}

EmaState ema_init(const ParamStore& params, double decay) {
  if (!(decay > 0.0 && decay < 1.0))
    throw ConfigError("ema: decay must lie in (0, 1)");
  EmaState s;
  s.decay = decay;
  for (const auto& e : params.entries)
    if (e.trainable) s.shadow.emplace(e.name, e.value);
  s.initialized = true;
  return s;
}

void ema_update(EmaState& s, const ParamStore& params) {
  if (!s.initialized) throw UsageError("ema: state not initialized");
  for (auto& [name, sh] : s.shadow) {
    const Tensor& p = params.get(name);
    if (!p.same_shape(sh)) throw ShapeError("ema: shape mismatch for " + name);
    for (size_t i = 0; i < sh.v.size(); ++i)
      sh.v[i] = s.decay * sh.v[i] + (1.0 - s.decay) * p.v[i];
  }
}

void ema_swap(ParamStore& params, EmaState& s) {
  if (!s.initialized) throw UsageError("ema: state not initialized");
  for (auto& [name, sh] : s.shadow) {
    Tensor& p = params.get(name);
    if (!p.same_shape(sh)) throw ShapeError("ema: shape mismatch for " + name);
    std::swap(p.v, sh.v);
  }
}

OptState opt_init(const ParamStore& params) {
  OptState s;
  for (const auto& e : params.entries) {
    if (!e.trainable) continue;
    s.m.emplace(e.name, Tensor::zeros(e.value.shape));
    s.v.emplace(e.name, Tensor::zeros(e.value.shape));
  }
  return s;
}

void optimizer_step(ParamStore& params, const GradMap& grads, OptState& opt,
                    double lr) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  opt.step += 1;
  double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(opt.step));
  double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(opt.step));
  for (const auto& [name, g] : grads) {
    auto im = opt.m.find(name);
    auto iv = opt.v.find(name);
    if (im == opt.m.end() || iv == opt.v.end())
      throw UsageError("optimizer: unknown parameter " + name);
    Tensor& p = params.get(name);
    if (!p.same_shape(g))
      throw ShapeError("optimizer: gradient shape mismatch for " + name);
    Tensor& mom = im->second;
    Tensor& vel = iv->second;
    for (size_t i = 0; i < p.v.size(); ++i) {
      mom.v[i] = kBeta1 * mom.v[i] + (1.0 - kBeta1) * g.v[i];
      vel.v[i] = kBeta2 * vel.v[i] + (1.0 - kBeta2) * g.v[i] * g.v[i];
      p.v[i] -= lr * (mom.v[i] / bc1) / (std::sqrt(vel.v[i] / bc2) + kEps);
    }
  }
}

Tensor fgm_perturb(const Tensor& grad, double eps) {
  if (eps < 0.0) throw UsageError("fgm: epsilon must be >= 0");
  double sq = 0.0;
  for (double x : grad.v) sq += x * x;
  double norm = std::sqrt(sq);
  Tensor out = Tensor::zeros(grad.shape);
  if (norm == 0.0 || eps == 0.0) return out;
  double c = eps / norm;
  for (size_t i = 0; i < grad.v.size(); ++i) out.v[i] = grad.v[i] * c;
  return out;
}

std::pair<Tensor, Tensor> embedding_mixup(const Tensor& cls_i,
                                          const Tensor& y_i,
                                          const Tensor& cls_j,
                                          const Tensor& y_j, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw UsageError("mixup: lambda must lie in [0, 1]");
  if (!cls_i.same_shape(cls_j) || !y_i.same_shape(y_j))
    throw ShapeError("mixup: pair shapes must match");
  Tensor c = cls_i;
  Tensor y = y_i;
  for (size_t i = 0; i < c.v.size(); ++i)
    c.v[i] = lambda * cls_i.v[i] + (1.0 - lambda) * cls_j.v[i];
  for (size_t i = 0; i < y.v.size(); ++i)
    y.v[i] = lambda * y_i.v[i] + (1.0 - lambda) * y_j.v[i];
  return {std::move(c), std::move(y)};
}

double lr_at(int64_t step, int64_t total_steps, const TrainConfig& cfg) {
  if (step < 0 || step > total_steps)
    throw UsageError("lr_at: step outside the schedule");
  if (total_steps <= 0) return 0.0;
  int64_t w = std::max<int64_t>(
      1, static_cast<int64_t>(std::floor(cfg.warmup_ratio *
                                         static_cast<double>(total_steps))));
  if (step <= w)
    return cfg.lr * static_cast<double>(step) / static_cast<double>(w);
  return cfg.lr * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - w);
}

double clip_gradients(GradMap& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw UsageError("clip: max_norm must be positive");
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double x : g.v) sq += x * x;
  double norm = std::sqrt(sq);
  if (norm > max_norm) {
    double c = max_norm / norm;
    for (auto& [name, g] : grads)
      for (double& x : g.v) x *= c;
  }
  return norm;
}

TrainerState trainer_state_init(const Model& m, const TrainConfig& cfg,
                                const objectives::ContrastiveConfig& ccfg) {
  TrainerState s;
  s.opt = opt_init(m.params);
  s.ema = ema_init(m.params, cfg.ema_decay);
  objectives::momentum_init(s.queue, m.params, m.enc, ccfg);
  return s;
}

namespace {

uint64_t enc_seed(const TrainConfig& cfg, int64_t step, size_t k,
                  uint64_t branch) {
  return derive_seed(cfg.seed, "enc", static_cast<uint64_t>(step),
                     static_cast<uint64_t>(k), branch);
}

std::string format_parts(
    const std::vector<std::pair<std::string, double>>& parts) {
  std::string s;
  for (const auto& [name, value] : parts) {
    if (!s.empty()) s += ", ";
    s += name + "=" + std::to_string(value);
  }
  return s;
}

Var pretrain_batch_loss(Tape& tape, const LeafMap& leaves, const Model& m,
                        const std::vector<PretrainInstance>& instances,
                        const corpus::TaskBatch& b, const TrainConfig& cfg,
                        const objectives::ContrastiveConfig& ccfg,
                        const objectives::MomentumQueue& queue,
                        int64_t step) {
  switch (b.tag) {
    case TaskTag::MLM: {
      std::vector<Var> rows;
      std::vector<int32_t> targets;
      for (size_t k = 0; k < b.idx.size(); ++k) {
        const PretrainInstance& inst = instances[b.idx[k]];
        auto er = encoder::encode(tape, leaves, m.enc, inst.input, true,
                                  enc_seed(cfg, step, k, 0));
        std::vector<int64_t> pos;
        pos.reserve(inst.mlm_targets.size());
        for (const auto& [p, orig] : inst.mlm_targets) {
          pos.push_back(p);
          targets.push_back(orig);
        }
        rows.push_back(tape.take_rows(er.hidden, std::move(pos)));
      }
      Var h = tape.stack_rows(rows);
      Var logits =
          encoder::head_logits(tape, leaves, h, encoder::HeadKind::MLM);
      return objectives::mlm_loss(tape, logits, targets);
    }
    case TaskTag::P2Q:
    case TaskTag::P2BRAND:
    case TaskTag::P2COLOR: {
      std::vector<Var> cls;
      std::vector<int32_t> targets;
      for (size_t k = 0; k < b.idx.size(); ++k) {
        const PretrainInstance& inst = instances[b.idx[k]];
        auto er = encoder::encode(tape, leaves, m.enc, inst.input, true,
                                  enc_seed(cfg, step, k, 0));
        cls.push_back(er.cls);
        targets.push_back(inst.label);
      }
      Var h = tape.stack_rows(cls);
      encoder::HeadKind hk = b.tag == TaskTag::P2Q
                                 ? encoder::HeadKind::P2Q2
                                 : b.tag == TaskTag::P2BRAND
                                       ? encoder::HeadKind::BRAND
                                       : encoder::HeadKind::COLOR;
      Var logits = encoder::head_logits(tape, leaves, h, hk);
      return objectives::classification_loss(tape, logits, targets,
                                             objectives::LossKind::CE,
                                             objectives::LossParams{});
    }
    case TaskTag::CONTRAST: {
      std::vector<Var> a;
      std::vector<Var> bv;
      for (size_t k = 0; k < b.idx.size(); ++k) {
        const PretrainInstance& inst = instances[b.idx[k]];
        a.push_back(encoder::encode(tape, leaves, m.enc, inst.input, true,
                                    enc_seed(cfg, step, k, 0))
                        .cls);
        bv.push_back(encoder::encode(tape, leaves, m.enc, inst.paired, true,
                                     enc_seed(cfg, step, k, 1))
                         .cls);
      }
      Var h = tape.stack_rows(a);
      Var hp = tape.stack_rows(bv);
      return objectives::contrastive_loss(tape, h, hp, queue.entries, ccfg);
    }
  }
  throw UsageError("pretrain: unknown task tag");
}

}  // namespace

PretrainRun train_pretrain(Model& m,
                           const std::vector<PretrainInstance>& instances,
                           const TrainConfig& cfg,
                           const objectives::ContrastiveConfig& ccfg,
                           TrainerState& state,
                           const std::function<bool(int64_t)>& after_epoch) {
  cfg.validate();
  ccfg.validate();
  if (instances.empty()) throw DataError("pretrain: no instances to train on");

  std::map<TaskTag, int64_t> counts;
  for (const auto& inst : instances) counts[inst.tag] += 1;
  int64_t per_epoch = 0;
  for (const auto& [tag, c] : counts)
    per_epoch += (c + cfg.batch_size - 1) / cfg.batch_size;
  int64_t total_steps = per_epoch * cfg.pretrain_epochs;

  PretrainRun run;
  for (int64_t e = state.epochs_done + 1; e <= cfg.pretrain_epochs; ++e) {
    Rng erng(derive_seed(cfg.seed, "epoch", static_cast<uint64_t>(e)));
    auto plan = corpus::mix_task_batches(instances, cfg.batch_size, erng);
    double loss_sum = 0.0;
    std::map<std::string, double> task_sum;
    std::map<std::string, int64_t> task_count;
    for (const auto& b : plan) {
      state.global_step += 1;
      int64_t step = state.global_step;
      Tape tape;
      LeafMap leaves = numerics::leaf_all(tape, m.params);
      Var loss = pretrain_batch_loss(tape, leaves, m, instances, b, cfg, ccfg,
                                     state.queue, step);
      double lv = tape.val(loss)[0];
      std::string tname = corpus::to_string(b.tag);
      std::vector<std::pair<std::string, double>> parts{{tname, lv}};
      if (!std::isfinite(lv))
        throw RuntimeFailure("pretrain: non-finite loss at step " +
                             std::to_string(step) + " epoch " +
                             std::to_string(e) + " task " + tname + " (" +
                             format_parts(parts) + ")");
      tape.backward(loss);
      GradMap grads = collect_grads(tape, leaves, m.params);
      double gnorm = clip_gradients(grads, cfg.clip_norm);
      double lr = lr_at(step, total_steps, cfg);
      optimizer_step(m.params, grads, state.opt, lr);
      if (cfg.toggles.ema) ema_update(state.ema, m.params);
      if (b.tag == TaskTag::CONTRAST) {
        std::vector<std::vector<int32_t>> views;
        views.reserve(b.idx.size());
        for (size_t i : b.idx) views.push_back(instances[i].paired);
        objectives::queue_update(state.queue, m.params, views, m.enc, ccfg);
      }
      run.steps.push_back(StepLog{step, e, tname, parts, lr, gnorm});
      loss_sum += lv;
      task_sum[tname] += lv;
      task_count[tname] += 1;
    }
    PretrainEpoch ep;
    ep.epoch = e;
    ep.mean_loss = loss_sum / static_cast<double>(plan.size());
    for (const auto& [tname, s] : task_sum)
      ep.task_mean[tname] = s / static_cast<double>(task_count[tname]);
    run.epochs.push_back(ep);
    state.epochs_done = e;
    if (after_epoch && !after_epoch(e)) break;
  }
  return run;
}

encoder::HeadKind finetune_head(FinetuneTask t) {
  return t == FinetuneTask::BINARY2 ? encoder::HeadKind::SUBSTITUTE2
                                    : encoder::HeadKind::ESCI4;
}

int64_t finetune_classes(FinetuneTask t) {
  return t == FinetuneTask::BINARY2 ? 2 : 4;
}

int32_t finetune_target(FinetuneTask t, corpus::EsciLabel label) {
  if (t == FinetuneTask::BINARY2)
    return label == corpus::EsciLabel::Substitute ? 1 : 0;
  return corpus::esci_index(label);
}

std::string to_string(FinetuneTask t) {
  switch (t) {
    case FinetuneTask::RANK4: return "task1";
    case FinetuneTask::CLASS4: return "task2";
    case FinetuneTask::BINARY2: return "task3";
  }
  throw UsageError("finetune task: unknown value");
}

FinetuneTask parse_finetune_task(const std::string& s) {
  if (s == "task1") return FinetuneTask::RANK4;
  if (s == "task2") return FinetuneTask::CLASS4;
  if (s == "task3") return FinetuneTask::BINARY2;
  throw ConfigError("task: expected task1, task2 or task3, got '" + s + "'");
}

std::vector<int32_t> finetune_input_ids(const Model& m, const Example& ex) {
  return corpus::tokenize_pair(ex.query, ex.title, m.vocab, m.enc.max_len);
}

namespace {

std::string joined_bullets(const Example& ex) {
  std::string s;
  for (const auto& b : ex.bullet_points) {
    if (!s.empty()) s += ' ';
    s += b;
  }
  return s;
}

Var feature_row(Tape& tape, const LeafMap& leaves, const Model& m, Var cls,
                const Example& ex) {
  return encoder::assemble_features(
      tape, leaves, cls, ex.query, joined_bullets(ex), ex.description,
      m.countries.id_of(corpus::to_string(ex.locale)), m.brands.id_of(ex.brand),
      m.colors.id_of(ex.color), m.feat);
}

int32_t argmax_of(const std::vector<double>& xs) {
  int32_t best = 0;
  for (size_t i = 1; i < xs.size(); ++i)
    if (xs[i] > xs[static_cast<size_t>(best)]) best = static_cast<int32_t>(i);
  return best;
}

}  // namespace

FinetuneRun train_finetune(Model& m, const std::vector<Example>& train,
                           const std::vector<Example>& eval,
                           FinetuneTask task, const TrainConfig& cfg,
                           TrainerState& state,
                           const std::function<bool(int64_t)>& after_epoch) {
  cfg.validate_finetune();
  if (train.empty()) throw DataError("finetune: empty training set");
  for (const auto& ex : train)
    if (!ex.esci_label)
      throw DataError("finetune: unlabeled example " + ex.example_id);

  encoder::HeadKind head = finetune_head(task);
  int64_t n_classes = finetune_classes(task);
  int64_t n = static_cast<int64_t>(train.size());
  int64_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  int64_t total_steps = per_epoch * cfg.finetune_epochs;

  FinetuneRun run;
  for (int64_t e = state.epochs_done + 1; e <= cfg.finetune_epochs; ++e) {
    Rng erng(derive_seed(cfg.seed, "fepoch", static_cast<uint64_t>(e)));
    std::vector<size_t> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), size_t{0});
    erng.shuffle(perm);

    double loss_sum = 0.0;
    int64_t batches = 0;
    for (int64_t start = 0; start < n; start += cfg.batch_size) {
      int64_t stop = std::min(n, start + cfg.batch_size);
      int64_t bsz = stop - start;
      state.global_step += 1;
      int64_t step = state.global_step;

      Tape tape;
      LeafMap leaves = numerics::leaf_all(tape, m.params);

      std::vector<Var> feats;
      feats.reserve(static_cast<size_t>(bsz));
      std::vector<int32_t> targets(static_cast<size_t>(bsz));
      std::vector<std::vector<int32_t>> ids_of(static_cast<size_t>(bsz));
      for (int64_t k = 0; k < bsz; ++k) {
        const Example& ex = train[perm[static_cast<size_t>(start + k)]];
        ids_of[static_cast<size_t>(k)] = finetune_input_ids(m, ex);
        auto er = encoder::encode(tape, leaves, m.enc,
                                  ids_of[static_cast<size_t>(k)], true,
                                  enc_seed(cfg, step, static_cast<size_t>(k), 0));
        feats.push_back(feature_row(tape, leaves, m, er.cls, ex));
        targets[static_cast<size_t>(k)] = finetune_target(task, *ex.esci_label);
      }
      Var f = tape.stack_rows(feats);
      Var logits1 = encoder::head_logits(tape, leaves, f, head);
      Var task_loss = objectives::classification_loss(
          tape, logits1, targets, cfg.loss_kind, cfg.loss_params);

      std::vector<Var> loss_parts{task_loss};
      std::vector<std::pair<std::string, double>> parts{
          {"task", tape.val(task_loss)[0]}};

      if (cfg.toggles.fgm) {
        tape.backward(task_loss);
        Tensor g_emb = tape.grad(leaves.at("enc.tok_emb"));
        tape.zero_grad();
        Tensor delta = fgm_perturb(g_emb, cfg.fgm_epsilon);
        std::vector<Var> feats2;
        feats2.reserve(static_cast<size_t>(bsz));
        for (int64_t k = 0; k < bsz; ++k) {
          const Example& ex = train[perm[static_cast<size_t>(start + k)]];
          Tensor off = gather_rows(delta, ids_of[static_cast<size_t>(k)]);
          auto er = encoder::encode(
              tape, leaves, m.enc, ids_of[static_cast<size_t>(k)], true,
              enc_seed(cfg, step, static_cast<size_t>(k), 0), &off);
          feats2.push_back(feature_row(tape, leaves, m, er.cls, ex));
        }
        Var f2 = tape.stack_rows(feats2);
        Var logits2 = encoder::head_logits(tape, leaves, f2, head);
        Var adv_loss = objectives::classification_loss(
            tape, logits2, targets, cfg.loss_kind, cfg.loss_params);
        loss_parts.push_back(adv_loss);
        parts.emplace_back("adversarial", tape.val(adv_loss)[0]);
        if (cfg.toggles.rdrop) {
          Var rd = objectives::rdrop_loss(tape, logits1, logits2,
                                          cfg.rdrop_alpha);
          loss_parts.push_back(rd);
          parts.emplace_back("rdrop", tape.val(rd)[0]);
        }
      }

      if (cfg.toggles.mixup) {
        Rng rmix(derive_seed(cfg.seed, "mixup", static_cast<uint64_t>(step)));
        std::vector<Var> mixed;
        mixed.reserve(static_cast<size_t>(bsz));
        Tensor soft = Tensor::zeros({bsz, n_classes});
        for (int64_t k = 0; k < bsz; ++k) {
          int64_t j = bsz - 1 - k;
          double lam = rmix.beta(cfg.mixup_alpha, cfg.mixup_alpha);
          Var fi = tape.take_rows(f, {k});
          Var fj = tape.take_rows(f, {j});
          mixed.push_back(
              tape.add(tape.scale(fi, lam), tape.scale(fj, 1.0 - lam)));
          soft.at(k, targets[static_cast<size_t>(k)]) += lam;
          soft.at(k, targets[static_cast<size_t>(j)]) += 1.0 - lam;
        }
        Var fm = tape.stack_rows(mixed);
        Var lm = encoder::head_logits(tape, leaves, fm, head);
        Var mix_loss = objectives::soft_target_loss(tape, lm, soft);
        loss_parts.push_back(mix_loss);
        parts.emplace_back("mixup", tape.val(mix_loss)[0]);
      }

      Var total =
          loss_parts.size() == 1 ? loss_parts[0] : tape.sum_of(loss_parts);
      double lv = tape.val(total)[0];
      if (!std::isfinite(lv))
        throw RuntimeFailure("finetune: non-finite loss at step " +
                             std::to_string(step) + " epoch " +
                             std::to_string(e) + " task " + to_string(task) +
                             " (" + format_parts(parts) + ")");
      tape.backward(total);
      GradMap grads = collect_grads(tape, leaves, m.params);
      double gnorm = clip_gradients(grads, cfg.clip_norm);
      double lr = lr_at(step, total_steps, cfg);
      optimizer_step(m.params, grads, state.opt, lr);
      if (cfg.toggles.ema) ema_update(state.ema, m.params);

      run.steps.push_back(StepLog{step, e, to_string(task), parts, lr, gnorm});
      loss_sum += lv;
      batches += 1;
    }

    FinetuneEpoch ep;
    ep.epoch = e;
    ep.mean_loss = loss_sum / static_cast<double>(batches);
    ep.metric =
        evaluate_metric(m, state, cfg, eval.empty() ? train : eval, task);
    run.epochs.push_back(ep);
    state.epochs_done = e;
    if (after_epoch && !after_epoch(e)) break;
  }
  return run;
}

std::vector<std::vector<double>> predict_probs(const Model& m,
                                               const std::vector<Example>& xs,
                                               FinetuneTask task) {
  encoder::HeadKind head = finetune_head(task);
  std::vector<std::vector<double>> out;
  out.reserve(xs.size());
  constexpr size_t kChunk = 64;
  for (size_t base = 0; base < xs.size(); base += kChunk) {
    size_t stop = std::min(xs.size(), base + kChunk);
    Tape tape;
    LeafMap leaves = numerics::leaf_all(tape, m.params);
    std::vector<Var> feats;
    feats.reserve(stop - base);
    for (size_t i = base; i < stop; ++i) {
      auto ids = finetune_input_ids(m, xs[i]);
      auto er = encoder::encode(tape, leaves, m.enc, ids, false, 0);
      feats.push_back(feature_row(tape, leaves, m, er.cls, xs[i]));
    }
    Var f = tape.stack_rows(feats);
    Var probs =
        tape.softmax_rows(encoder::head_logits(tape, leaves, f, head));
    const Tensor& pv = tape.val(probs);
    for (size_t r = 0; r < stop - base; ++r) {
      std::vector<double> row(static_cast<size_t>(pv.cols()));
      for (int64_t c = 0; c < pv.cols(); ++c)
        row[static_cast<size_t>(c)] = pv.at(static_cast<int64_t>(r), c);
      out.push_back(std::move(row));
    }
  }
  return out;
}

double evaluate_metric(Model& m, TrainerState& state, const TrainConfig& cfg,
                       const std::vector<Example>& eval, FinetuneTask task) {
  if (eval.empty()) throw UsageError("evaluate: empty evaluation set");
  for (const auto& ex : eval)
    if (!ex.esci_label)
      throw DataError("evaluate: unlabeled example " + ex.example_id);

  bool use_ema = cfg.toggles.ema && state.ema.initialized;
  if (use_ema) ema_swap(m.params, state.ema);
  double metric = 0.0;
  try {
    auto probs = predict_probs(m, eval, task);
    if (task == FinetuneTask::RANK4) {
      std::map<std::string, evalkit::RankedList> by_query;
      for (size_t i = 0; i < eval.size(); ++i) {
        evalkit::RankedList& rl = by_query[eval[i].query];
        rl.query_id = eval[i].query;
        rl.items.push_back(evalkit::RankedItem{
            eval[i].product_id, encoder::rank_score(probs[i]),
            encoder::esci_gain(corpus::esci_index(*eval[i].esci_label))});
      }
      double sum = 0.0;
      for (auto& [q, rl] : by_query) {
        evalkit::sort_ranked(rl);
        std::vector<double> gains;
        gains.reserve(rl.items.size());
        for (const auto& it : rl.items) gains.push_back(*it.gain);
        sum += evalkit::ndcg(gains);
      }
      metric = sum / static_cast<double>(by_query.size());
    } else {
      std::vector<int32_t> pred;
      std::vector<int32_t> gold;
      pred.reserve(eval.size());
      gold.reserve(eval.size());
      for (size_t i = 0; i < eval.size(); ++i) {
        pred.push_back(argmax_of(probs[i]));
        gold.push_back(finetune_target(task, *eval[i].esci_label));
      }
      metric = evalkit::micro_f1(pred, gold);
    }
  } catch (...) {
    if (use_ema) ema_swap(m.params, state.ema);
    throw;
  }
  if (use_ema) ema_swap(m.params, state.ema);
  return metric;
}

}  // namespace relkit::trainer
