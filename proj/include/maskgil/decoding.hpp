#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "maskgil/model/model.hpp"
#include "maskgil/schedules.hpp"
#include "maskgil/types.hpp"

namespace maskgil::decoding {

// l_u + s (l_c - l_u), element-wise.
std::vector<float> cfg_mix(std::span<const float> cond, std::span<const float> uncond, float scale);

struct SampledTokens {
  std::vector<TokenId> tokens;
  // Probability of the drawn token under softmax(logits / temperature).
  std::vector<double> confidences;
  // Ranking key used by select_mask: confidences, or log-confidence plus
  // Gumbel noise when choice_temp > 0.
  std::vector<double> scores;
  // Entropy of each row's sampling distribution.
  std::vector<double> entropies;
};

// Draws one token per logits row [M x K]. Consumes one uniform per row,
// plus one more per row when choice noise is on.
SampledTokens sample_tokens(const numerics::TensorF& logits, double temperature,
                            double choice_temp, double iteration_fraction, Rng& rng);

// Draws an index from a probability vector with one uniform.
std::size_t sample_categorical(std::span<const double> probs, double u);

// Positions to keep masked: the n lowest-scoring positions that are not
// fixed, ties going to the lower index. Returned in ascending order.
std::vector<std::size_t> select_mask(std::span<const double> confidences, std::size_t n,
                                     const std::vector<bool>& fixed);

struct Prefill {
  std::size_t position = 0;  // raster index
  TokenId token = 0;
};

// Per-position decoding state: a token id or the mask id, and a confidence
// that is exactly 1 for every fixed position.
struct MaskState {
  std::vector<TokenId> assignment;
  std::vector<double> confidence;
  std::vector<bool> fixed;
  std::size_t iteration = 0;

  std::size_t masked_count() const;
};

struct DecodeOptions {
  schedules::ScheduleKind schedule = schedules::ScheduleKind::arccos;
  std::size_t steps = 8;
  double cfg_scale = 1.0;
  double temperature = 1.0;
  double choice_temp = 0.0;
};

struct IterationRecord {
  std::size_t step = 0;
  std::size_t masked_before = 0;
  std::vector<std::size_t> newly_fixed;
  double mean_confidence = 0.0;
  double mean_entropy = 0.0;
  double millis = 0.0;
};

struct DecodeTrace {
  std::vector<IterationRecord> records;
  std::size_t forward_passes = 0;
  double total_millis = 0.0;

  // step,masked_before,newly_fixed,mean_conf,mean_entropy,millis. With
  // timing off the millis column is written as 0 so reruns are byte-identical.
  std::string to_csv(bool timing) const;
};

struct DecodeResult {
  TokenGrid grid;
  DecodeTrace trace;
};

// Iterative confidence-based decoding over the whole grid. Prefilled
// positions are fixed up front with confidence 1 and never re-masked; the
// schedule runs over the remaining positions.
DecodeResult decode(const model::ParametersF& params, const model::ModelConfig& config,
                    const Condition& condition, const DecodeOptions& options, Rng& rng,
                    std::span<const Prefill> prefilled = {});

}  // namespace maskgil::decoding
