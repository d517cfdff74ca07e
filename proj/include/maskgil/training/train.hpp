#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "maskgil/model/model.hpp"
#include "maskgil/training/config.hpp"
#include "maskgil/training/optim.hpp"
#include "maskgil/training/task.hpp"

namespace maskgil::training {

struct StepMetrics {
  std::size_t step = 0;
  double loss = 0.0;
  // RMS of the last block's output (the residual stream before the final norm).
  double output_rms = 0.0;
  std::size_t cond_drop_count = 0;
};

// step,loss,output_rms,cond_drop_count
std::string metrics_csv(const std::vector<StepMetrics>& metrics);

struct TrainResult {
  model::ParametersF params;
  AdamState optimizer;
  std::vector<StepMetrics> metrics;
  std::size_t step = 0;
};

// Trains in place for config.steps steps. Bidirectional models learn the
// masked-token objective; causal models learn next-token prediction over the
// whole grid. Condition dropout swaps in the null condition. Deterministic in
// config.seed; a non-finite value aborts with NumericError carrying the
// output-RMS series so far.
TrainResult train_loop(model::ParametersF params, const model::ModelConfig& model_config,
                       const SyntheticTask& task, const TrainConfig& config,
                       const std::function<void(const StepMetrics&)>& on_step = {});

// Greedy (argmax) accuracy on masked positions over freshly drawn grids.
double masked_accuracy(const model::ParametersF& params, const model::ModelConfig& config,
                       const SyntheticTask& task, std::size_t grids, Rng& rng);

// Fraction of positions of `grid` matching the clean pattern of class c.
double pattern_accuracy(const TokenGrid& grid, const SyntheticTask& task, std::size_t c);

}  // namespace maskgil::training
