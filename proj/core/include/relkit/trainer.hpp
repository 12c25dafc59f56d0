#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "relkit/data.hpp"
#include "relkit/instances.hpp"
#include "relkit/model.hpp"
#include "relkit/objectives.hpp"

namespace relkit::trainer {

using numerics::ParamStore;
using numerics::Tensor;

struct TrainToggles {
  bool ema = true;
  bool fgm = false;
  bool rdrop = false;
  bool mixup = false;
};

struct TrainConfig {
  double lr = 1e-5;
  double warmup_ratio = 0.10;
  int64_t batch_size = 32;
  double clip_norm = 1.0;
  int64_t pretrain_epochs = 10;
  int64_t finetune_epochs = 5;
  double ema_decay = 0.999;
  double fgm_epsilon = 1.0;
  double rdrop_alpha = 1.0;
  double mixup_alpha = 0.2;
  objectives::LossKind loss_kind = objectives::LossKind::CE;
  objectives::LossParams loss_params;
  uint64_t seed = 0;
  TrainToggles toggles;

  // Numeric invariants; ConfigError on violation.
  void validate() const;
  // validate() plus the pairing constraint: rdrop compares the clean
  // logits against the adversarial ones, so it needs fgm enabled.
  void validate_finetune() const;
};

// Gradients of one step keyed by parameter name. std::map iterates in
// name order, which pins the reduction order for clipping and updates.
using GradMap = std::map<std::string, Tensor>;

// Gradients of every trainable leaf backward actually reached.
GradMap collect_grads(numerics::Tape& tape, const numerics::LeafMap& leaves,
                      const ParamStore& params);

// Exponential moving average of the trainable parameters. Frozen
// tensors are excluded; shadow shapes mirror the trainable set.
struct EmaState {
  std::map<std::string, Tensor> shadow;
  double decay = 0.999;
  bool initialized = false;
};

// Shadow starts as a copy of the current parameters, so a swap before
// any update is the identity.
EmaState ema_init(const ParamStore& params, double decay);

// shadow <- decay * shadow + (1 - decay) * params, elementwise.
void ema_update(EmaState& s, const ParamStore& params);

// Exchanges parameter and shadow buffers bit-exactly; calling twice
// restores the original bits.
void ema_swap(ParamStore& params, EmaState& s);

// Adam accumulators (beta1 0.9, beta2 0.999, eps 1e-8, bias-corrected).
struct OptState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  int64_t step = 0;
};

OptState opt_init(const ParamStore& params);

// One Adam update at the given learning rate. Parameters without an
// entry in `grads` keep both their value and their moments.
void optimizer_step(ParamStore& params, const GradMap& grads, OptState& opt,
                    double lr);

// One-step adversarial offset: eps * g / ||g||_2 with the whole tensor
// treated as one vector; zero gradient gives a zero offset.
Tensor fgm_perturb(const Tensor& grad, double eps);

// Convex blend of two feature rows and their simplex targets.
std::pair<Tensor, Tensor> embedding_mixup(const Tensor& cls_i,
                                          const Tensor& y_i,
                                          const Tensor& cls_j,
                                          const Tensor& y_j, double lambda);

// Linear warmup from 0 to cfg.lr over the first warmup_ratio of steps,
// then linear decay back to 0 at step == total_steps. Steps are 1-based
// inside the training loops; the warmup window is never empty, so a
// one-step schedule peaks at its only step.
double lr_at(int64_t step, int64_t total_steps, const TrainConfig& cfg);

// Scales every gradient by max_norm / norm when the global L2 norm
// exceeds max_norm. Returns the pre-clip norm.
double clip_gradients(GradMap& grads, double max_norm);

struct StepLog {
  int64_t step = 0;
  int64_t epoch = 0;
  std::string task;
  std::vector<std::pair<std::string, double>> parts;
  double lr = 0.0;
  double grad_norm = 0.0;
};

// Optimizer-side state a checkpoint carries across runs.
struct TrainerState {
  OptState opt;
  EmaState ema;
  objectives::MomentumQueue queue;
  int64_t epochs_done = 0;
  int64_t global_step = 0;
};

TrainerState trainer_state_init(const Model& m, const TrainConfig& cfg,
                                const objectives::ContrastiveConfig& ccfg);

struct PretrainEpoch {
  int64_t epoch = 0;
  double mean_loss = 0.0;
  std::map<std::string, double> task_mean;
};

struct PretrainRun {
  std::vector<PretrainEpoch> epochs;
  std::vector<StepLog> steps;
};

// Multitask pre-training over task-homogeneous batches: per epoch a
// seeded mixed plan, per batch the task's own loss (MLM, pair or value
// classification, or contrastive), then clip / Adam / optional EMA, and
// a momentum-queue refresh after every contrastive step. Runs epochs
// state.epochs_done+1 through cfg.pretrain_epochs; the learning-rate
// schedule always spans the full horizon, so a stopped-and-resumed run
// retraces the uninterrupted one. A non-finite loss aborts with the
// step, task, and loss parts in the message. `after_epoch` may return
// false to stop early (checkpoint-and-exit).
PretrainRun train_pretrain(
    Model& m, const std::vector<corpus::PretrainInstance>& instances,
    const TrainConfig& cfg, const objectives::ContrastiveConfig& ccfg,
    TrainerState& state,
    const std::function<bool(int64_t)>& after_epoch = {});

// Fine-tuning objectives. The 4-way relevance head serves both the
// ranking task and the multiclass task; the binary head serves
// substitute identification.
enum class FinetuneTask { RANK4, CLASS4, BINARY2 };

encoder::HeadKind finetune_head(FinetuneTask t);
int64_t finetune_classes(FinetuneTask t);
int32_t finetune_target(FinetuneTask t, corpus::EsciLabel label);
std::string to_string(FinetuneTask t);
FinetuneTask parse_finetune_task(const std::string& s);  // task1|task2|task3

// Encoder input for a labeled pair: [CLS] query [SEP] title [SEP].
std::vector<int32_t> finetune_input_ids(const Model& m,
                                        const corpus::Example& ex);

struct FinetuneEpoch {
  int64_t epoch = 0;
  double mean_loss = 0.0;
  double metric = 0.0;  // eval micro-F1, or mean nDCG for the rank task
};

struct FinetuneRun {
  std::vector<FinetuneEpoch> epochs;
  std::vector<StepLog> steps;
};

// Per batch: clean forward and task loss; with fgm, a second forward
// under the one-step embedding offset (same dropout seeds, table bits
// untouched) adds the adversarial loss; rdrop then penalizes the
// clean/adversarial logit gap; mixup adds a soft-target loss on blended
// feature rows (partner = reversed batch order). Loss parts sum with
// weight 1, so every disabled toggle leaves the remaining trajectory
// bit-identical. Evaluation swaps in the EMA weights when enabled.
FinetuneRun train_finetune(
    Model& m, const std::vector<corpus::Example>& train,
    const std::vector<corpus::Example>& eval, FinetuneTask task,
    const TrainConfig& cfg, TrainerState& state,
    const std::function<bool(int64_t)>& after_epoch = {});

// Deterministic eval-mode class probabilities, one row per example.
std::vector<std::vector<double>> predict_probs(
    const Model& m, const std::vector<corpus::Example>& xs,
    FinetuneTask task);

// Held-out metric for the task: micro-F1 of argmax predictions, or mean
// per-query nDCG for the ranking task. Uses EMA weights when the toggle
// is on and the state is initialized; parameters are restored after.
double evaluate_metric(Model& m, TrainerState& state, const TrainConfig& cfg,
                       const std::vector<corpus::Example>& eval,
                       FinetuneTask task);

}  // namespace relkit::trainer
