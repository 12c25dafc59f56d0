#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relkit/autodiff.hpp"
#include "relkit/params.hpp"

namespace relkit::encoder {

using numerics::LeafMap;
using numerics::ParamStore;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

struct EncoderConfig {
  int64_t layers = 2;
  int64_t d_model = 64;
  int64_t heads = 4;
  int64_t d_ff = 128;
  int64_t vocab_size = 0;
  int64_t max_len = 128;
  double dropout = 0.1;

  void validate() const;
};

// Registers every encoder tensor on the store under stable names, with
// N(0, 0.02) weights, zero biases, unit layer-norm gains. Each tensor's
// draws come from a seed derived from its own name, so the values do not
// depend on registration order.
void init_encoder_params(ParamStore& store, const EncoderConfig& cfg,
                         uint64_t seed);

// Names of every tensor init_encoder_params creates, in creation order.
std::vector<std::string> encoder_param_names(const EncoderConfig& cfg);

struct EncodeResult {
  Var hidden;  // [n x d]
  Var cls;     // [1 x d]
};

// Pre-norm transformer encoder. [PAD] positions are excluded from every
// attention softmax via an additive mask, which keeps the cls vector
// bit-identical when padding is appended in eval mode. `seed` feeds the
// dropout masks; train=false disables dropout entirely. `tok_offset`,
// when given, is added to the gathered token embeddings ([n x d], row r
// belongs to ids[r]) without touching the table itself; the adversarial
// sub-step rides on it.
EncodeResult encode(Tape& tape, const LeafMap& leaves,
                    const EncoderConfig& cfg,
                    const std::vector<int32_t>& ids, bool train,
                    uint64_t seed, const Tensor* tok_offset = nullptr);

}  // namespace relkit::encoder
