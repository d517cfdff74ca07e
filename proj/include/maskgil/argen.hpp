#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "maskgil/decoding.hpp"
#include "maskgil/model/model.hpp"
#include "maskgil/schedules.hpp"
#include "maskgil/types.hpp"

namespace maskgil::argen {

// Samples `count` grid tokens in raster order from a causal model, one model
// step per token. With use_cache the key/value cache is used; without it every
// step recomputes the full sequence (future positions hold the mask id).
// Both paths consume the rng identically and return the same tokens.
std::vector<TokenId> ar_sample(const model::ParametersF& params, const model::ModelConfig& config,
                               const Condition& condition, std::size_t count, double temperature,
                               Rng& rng, bool use_cache = true);

// ceil(ratio * n) with round-off slack, so 0.07 * 100 counts as 7.
std::size_t ar_prefix_count(double ratio, std::size_t n);

struct HybridPlan {
  double ar_ratio = 0.0;
  std::size_t prefix_count = 0;
  // Iterations of the mask phase; 0 when the prefix covers the grid. Capped at
  // the number of remaining tokens so every iteration fixes at least one.
  std::size_t mar_steps = 0;

  static HybridPlan make(double ratio, std::size_t tokens, std::size_t steps);
  std::size_t total_steps() const { return prefix_count + mar_steps; }
};

struct StepReport {
  double ar_ratio = 0.0;
  std::size_t ar_steps = 0;
  std::size_t mar_steps = 0;
  std::size_t total_steps = 0;
  double ar_millis = 0.0;
  double mar_millis = 0.0;
  double total_millis = 0.0;

  static std::string csv_header();
  // One CSV line (with newline); millis columns are 0 unless timing is set.
  std::string csv_row(bool timing) const;
};

struct HybridResult {
  TokenGrid grid;
  StepReport report;
  decoding::DecodeTrace trace;
};

// Throws ConfigError unless both models share K, grid shape and condition
// space, and the AR model is causal.
void validate_compatible(const model::ModelConfig& ar, const model::ModelConfig& mar);

struct HybridOptions {
  double ar_ratio = 0.5;
  double ar_temperature = 1.0;
  decoding::DecodeOptions decode;
};

// AR emits the first ceil(ratio * N) raster tokens, which the mask model then
// treats as fixed prompts while completing the rest.
HybridResult hybrid_generate(const model::ParametersF& ar_params,
                             const model::ModelConfig& ar_config,
                             const model::ParametersF& mar_params,
                             const model::ModelConfig& mar_config, const Condition& condition,
                             const HybridOptions& options, Rng& rng);

}  // namespace maskgil::argen
