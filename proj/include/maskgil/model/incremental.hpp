#pragma once

#include <cstddef>
#include <vector>

#include "maskgil/model/model.hpp"

namespace maskgil::model {

// Causal-mode forward one position at a time with a per-layer key/value
// cache. Every row is computed with the same row kernels as forward(), so
// the logits match the recompute-from-scratch path bit for bit.
class IncrementalDecoder {
 public:
  IncrementalDecoder(const ParametersF& params, const ModelConfig& config);

  // Feeds the condition prefill; returns the logits predicting grid token 0.
  std::vector<float> begin(const Condition& condition);
  // Appends one grid token; returns the logits predicting the next token.
  std::vector<float> push(TokenId token, Coord coord);

  std::size_t length() const noexcept { return length_; }

 private:
  std::vector<float> step(std::vector<float> x, Coord coord);

  const ParametersF* params_;
  ModelConfig config_;
  std::vector<std::vector<float>> keys_;    // per layer, length_ x hidden
  std::vector<std::vector<float>> values_;  // per layer, length_ x hidden
  std::size_t length_ = 0;
};

}  // namespace maskgil::model
