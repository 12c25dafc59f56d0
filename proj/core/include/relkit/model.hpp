#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relkit/encoder.hpp"
#include "relkit/features.hpp"
#include "relkit/params.hpp"
#include "relkit/vocab.hpp"

namespace relkit {

// Everything a forward pass needs: configs, the token and value
// vocabularies, and the parameter store (encoder + feature tables +
// every task head).
struct Model {
  encoder::EncoderConfig enc;
  encoder::FeatureConfig feat;
  corpus::Vocabulary vocab;
  corpus::ValueVocab countries;
  corpus::ValueVocab brands;
  corpus::ValueVocab colors;
  numerics::ParamStore params;
};

inline corpus::ValueVocab locale_value_vocab() {
  return corpus::value_vocab_from_list({"", "us", "es", "jp"});
}

// Fills model.params from the configs and vocabularies already set on
// the model. enc.vocab_size is taken from the token vocabulary.
inline void init_model(Model& m, uint64_t seed) {
  m.enc.vocab_size = m.vocab.size();
  m.enc.validate();
  m.feat.validate();
  if (m.countries.size() == 0) m.countries = locale_value_vocab();
  m.params = numerics::ParamStore{};
  encoder::init_encoder_params(m.params, m.enc, seed);
  encoder::init_feature_params(m.params, m.feat, m.countries.size(),
                               m.brands.size(), m.colors.size(), seed);
  encoder::init_head_params(m.params, m.enc, m.feat, m.brands.size(),
                            m.colors.size(), seed);
}

// Rows of `m` selected by token id, aligned with `ids`.
inline numerics::Tensor gather_rows(const numerics::Tensor& m,
                                    const std::vector<int32_t>& ids) {
  int64_t d = m.cols();
  numerics::Tensor out =
      numerics::Tensor::zeros({static_cast<int64_t>(ids.size()), d});
  for (size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || ids[r] >= m.rows())
      throw IndexError("gather_rows: id out of range");
    for (int64_t j = 0; j < d; ++j)
      out.at(static_cast<int64_t>(r), j) = m.at(ids[r], j);
  }
  return out;
}

}  // namespace relkit
