#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "relkit/autodiff.hpp"
#include "relkit/encoder.hpp"
#include "relkit/params.hpp"

namespace relkit::objectives {

using numerics::LeafMap;
using numerics::ParamStore;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

struct ContrastiveConfig {
  double temperature = 0.05;
  int64_t queue_capacity = 64;
  double momentum = 0.995;

  void validate() const;
};

// FIFO of detached sentence embeddings plus the momentum-encoder shadow
// parameters that produce them. Entries never carry gradients.
struct MomentumQueue {
  int64_t capacity = 0;
  std::deque<Tensor> entries;  // each [1 x d]
  ParamStore shadow;           // momentum copy of the encoder parameters
  bool initialized = false;
};

// Copies the encoder parameters into the queue's shadow store.
void momentum_init(MomentumQueue& q, const ParamStore& online,
                   const encoder::EncoderConfig& enc,
                   const ContrastiveConfig& cfg);

// InfoNCE over cosine similarities at temperature tau: for row i the
// positive is h_plus row i; the other batch rows and every queue entry
// are negatives. Returns the mean over rows.
Var contrastive_loss(Tape& tape, Var h, Var h_plus,
                     const std::deque<Tensor>& queue,
                     const ContrastiveConfig& cfg);

// Momentum update (shadow <- m*shadow + (1-m)*online), then re-encodes
// the views with the shadow encoder in eval mode and enqueues their cls
// vectors, evicting FIFO beyond capacity.
void queue_update(MomentumQueue& q, const ParamStore& online,
                  const std::vector<std::vector<int32_t>>& views,
                  const encoder::EncoderConfig& enc,
                  const ContrastiveConfig& cfg);

// Mean cross-entropy of the masked-position logits. An empty target list
// is a zero loss by convention (the batch had nothing masked).
Var mlm_loss(Tape& tape, Var logits, const std::vector<int32_t>& targets);

enum class LossKind { CE, FOCAL, GHM, POLY1 };
LossKind parse_loss_kind(const std::string& s);  // ConfigError on unknown
std::string to_string(LossKind k);

struct LossParams {
  double focal_gamma = 2.0;
  double poly1_eps = 1.0;
  int64_t ghm_bins = 10;
};

// Batch-mean classification loss over [N x K] logits. GHM weights are
// computed from this batch's |1 - p_t| histogram and treated as
// constants; with one bin it reduces to plain cross-entropy bit-for-bit.
Var classification_loss(Tape& tape, Var logits,
                        const std::vector<int32_t>& targets, LossKind kind,
                        const LossParams& params);

// Soft-target cross-entropy: mean over rows of -sum_c y_c log p_c.
// `targets` rows must lie on the simplex.
Var soft_target_loss(Tape& tape, Var logits, const Tensor& targets);

// alpha * [KL(P1||P2) + KL(P2||P1)], averaged over rows.
Var rdrop_loss(Tape& tape, Var logits1, Var logits2, double alpha);

// Unweighted sum of whatever loss parts the batch produced.
Var pretrain_total_loss(Tape& tape, const std::vector<Var>& parts);

}  // namespace relkit::objectives
