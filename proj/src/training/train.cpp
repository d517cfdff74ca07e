#include "maskgil/training/train.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "maskgil/errors.hpp"
#include "maskgil/json_fields.hpp"
#include "maskgil/numerics/kernels.hpp"
#include "maskgil/training/loss.hpp"

namespace maskgil::training {

void TrainConfig::validate() const {
  auto in_unit = [](double x) { return x >= 0.0 && x < 1.0; };
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be finite and >= 0");
  if (!in_unit(beta1) || !in_unit(beta2)) throw ConfigError("train: betas must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
  if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be positive");
  if (!in_unit(label_smoothing)) throw ConfigError("train: label_smoothing must lie in [0, 1)");
  if (!in_unit(cond_dropout)) throw ConfigError("train: cond_dropout must lie in [0, 1)");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["lr"] = c.lr;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["weight_decay"] = c.weight_decay;
  j["adam_eps"] = c.adam_eps;
  j["label_smoothing"] = c.label_smoothing;
  j["cond_dropout"] = c.cond_dropout;
  j["batch_size"] = c.batch_size;
  j["steps"] = c.steps;
  j["seed"] = c.seed;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::ordered_json& j) {
  TrainConfig c;
  JsonFields f(j, "train");
  f.get("lr", c.lr);
  f.get("beta1", c.beta1);
  f.get("beta2", c.beta2);
  f.get("weight_decay", c.weight_decay);
  f.get("adam_eps", c.adam_eps);
  f.get("label_smoothing", c.label_smoothing);
  f.get("cond_dropout", c.cond_dropout);
  f.get("batch_size", c.batch_size);
  f.get("steps", c.steps);
  f.get("seed", c.seed);
  f.finish();
  return c;
}

std::string metrics_csv(const std::vector<StepMetrics>& metrics) {
  std::ostringstream os;
  os << "step,loss,output_rms,cond_drop_count\n";
  char buf[128];
  for (const StepMetrics& m : metrics) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%zu\n", m.step, m.loss, m.output_rms,
                  m.cond_drop_count);
    os << buf;
  }
  return os.str();
}

namespace {

std::size_t draw_class(Rng& rng, std::size_t classes) {
  const auto c = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(classes));
  return c < classes ? c : classes - 1;
}

std::string norm_series(const std::vector<StepMetrics>& metrics) {
  std::ostringstream os;
  os << "output_rms series [";
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    if (i) os << ' ';
    os << metrics[i].output_rms;
  }
  os << ']';
  return os.str();
}

}  // namespace

TrainResult train_loop(model::ParametersF params, const model::ModelConfig& mc,
                       const SyntheticTask& task, const TrainConfig& config,
                       const std::function<void(const StepMetrics&)>& on_step) {
  mc.validate();
  config.validate();
  task.validate();
  task.check_model(mc);

  TrainResult result;
  result.params = std::move(params);
  Rng rng(config.seed);
  const std::size_t n = mc.grid_tokens();
  const bool causal = mc.attention == AttentionMode::causal;
  const std::vector<Coord> coords = raster_coords(mc.grid_h, mc.grid_w);

  for (std::size_t step = 1; step <= config.steps; ++step) {
    std::vector<model::SequenceInput> batch;
    std::vector<std::size_t> rows;
    std::vector<TokenId> targets;
    StepMetrics m;
    m.step = step;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const std::size_t c = draw_class(rng, task.num_classes);
      const TokenGrid grid = task.sample(c, rng);
      const bool drop = uniform01(rng) < config.cond_dropout;
      m.cond_drop_count += drop ? 1 : 0;
      model::SequenceInput seq{grid.indices, coords,
                               drop ? Condition{} : condition_for_class(mc, c)};
      if (causal) {
        for (std::size_t i = 0; i < n; ++i) {
          rows.push_back(b * n + i);
          targets.push_back(grid.indices[i]);
        }
      } else {
        for (std::size_t pos : sample_training_mask(rng, n)) {
          seq.tokens[pos] = mc.mask_token_id();
          rows.push_back(b * n + pos);
          targets.push_back(grid.indices[pos]);
        }
      }
      batch.push_back(std::move(seq));
    }

    std::vector<numerics::TensorF> grads;
    try {
      numerics::Tape<float> tape(true);
      model::BoundParameters<float> bound(tape, result.params);
      const auto out = model::forward_graph(tape, bound, mc,
                                            std::span<const model::SequenceInput>(batch),
                                            mc.attention);
      m.output_rms =
          static_cast<double>(numerics::root_mean_square<float>(tape.value(out.final_hidden).data()));
      const numerics::Var loss = numerics::ops::smoothed_cross_entropy(
          tape, out.logits, std::span<const std::size_t>(rows), std::span<const TokenId>(targets),
          static_cast<float>(config.label_smoothing));
      m.loss = static_cast<double>(tape.value(loss)[0]);
      if (!std::isfinite(m.loss)) throw NumericError("loss is not finite");
      tape.backward(loss);
      grads.reserve(bound.vars().size());
      for (numerics::Var v : bound.vars()) grads.push_back(tape.grad(v));
    } catch (const NumericError& e) {
      result.metrics.push_back(m);
      throw NumericError("training aborted at step " + std::to_string(step) + ": " + e.what() +
                         "; " + norm_series(result.metrics));
    }
    adamw_step(result.params, grads, result.optimizer, config);
    result.step = step;
    result.metrics.push_back(m);
    if (on_step) on_step(m);
  }
  return result;
}

double masked_accuracy(const model::ParametersF& params, const model::ModelConfig& mc,
                       const SyntheticTask& task, std::size_t grids, Rng& rng) {
  task.check_model(mc);
  if (grids == 0) throw InputError("masked_accuracy: need at least one grid");
  const std::size_t n = mc.grid_tokens();
  const std::vector<Coord> coords = raster_coords(mc.grid_h, mc.grid_w);
  std::size_t hits = 0;
  std::size_t total = 0;
  for (std::size_t g = 0; g < grids; ++g) {
    const std::size_t c = draw_class(rng, task.num_classes);
    const TokenGrid grid = task.sample(c, rng);
    std::vector<TokenId> input = grid.indices;
    const std::vector<std::size_t> mask = sample_training_mask(rng, n);
    for (std::size_t pos : mask) input[pos] = mc.mask_token_id();
    const auto logits = model::forward<float>(params, mc, input, coords,
                                              condition_for_class(mc, c), mc.attention);
    for (std::size_t pos : mask) {
      auto row = logits.row(pos);
      std::size_t best = 0;
      for (std::size_t k = 1; k < row.size(); ++k)
        if (row[k] > row[best]) best = k;
      hits += static_cast<TokenId>(best) == grid.indices[pos] ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

double pattern_accuracy(const TokenGrid& grid, const SyntheticTask& task, std::size_t c) {
  const TokenGrid ref = task.clean(c);
  if (grid.h != ref.h || grid.w != ref.w || grid.size() != ref.size()) {
    throw ShapeError("pattern_accuracy: grid shape differs from the task");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) hits += grid.indices[i] == ref.indices[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ref.size());
}

}  // namespace maskgil::training
