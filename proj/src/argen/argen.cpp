#include "maskgil/argen.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "maskgil/errors.hpp"
#include "maskgil/model/incremental.hpp"
#include "maskgil/numerics/kernels.hpp"

namespace maskgil::argen {

namespace {

using Clock = std::chrono::steady_clock;

double millis_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

TokenId draw(std::span<const float> logits, double temperature, Rng& rng) {
  if (!numerics::all_finite(logits)) throw NumericError("ar_sample: non-finite logits");
  std::vector<double> probs(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j)
    probs[j] = static_cast<double>(logits[j]) / temperature;
  numerics::softmax_inplace<double>(probs);
  return static_cast<TokenId>(decoding::sample_categorical(probs, uniform01(rng)));
}

}  // namespace

std::vector<TokenId> ar_sample(const model::ParametersF& params, const model::ModelConfig& config,
                               const Condition& condition, std::size_t count, double temperature,
                               Rng& rng, bool use_cache) {
  if (config.attention != AttentionMode::causal) {
    throw ConfigError("ar_sample needs a causal model");
  }
  const std::size_t n = config.grid_tokens();
  if (count > n) {
    throw ContractError("ar_sample: " + std::to_string(count) + " tokens requested from a grid of " +
                        std::to_string(n));
  }
  if (!(temperature > 0.0)) throw InputError("ar_sample: temperature must be positive");
  std::vector<TokenId> out;
  out.reserve(count);
  if (count == 0) return out;
  const std::vector<Coord> coords = raster_coords(config.grid_h, config.grid_w);

  if (use_cache) {
    model::IncrementalDecoder dec(params, config);
    std::vector<float> logits = dec.begin(condition);
    for (std::size_t i = 0; i < count; ++i) {
      out.push_back(draw(logits, temperature, rng));
      if (i + 1 < count) logits = dec.push(out.back(), coords[i]);
    }
    return out;
  }

  std::vector<TokenId> seq(n, config.mask_token_id());
  for (std::size_t i = 0; i < count; ++i) {
    const auto logits = model::forward<float>(params, config, seq, coords, condition,
                                              AttentionMode::causal);
    seq[i] = draw(logits.row(i), temperature, rng);
    out.push_back(seq[i]);
  }
  return out;
}

std::size_t ar_prefix_count(double ratio, std::size_t n) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw InputError("AR ratio must lie in [0, 1]");
  const double x = ratio * static_cast<double>(n);
  const auto c = static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
  return std::min(c, n);
}

HybridPlan HybridPlan::make(double ratio, std::size_t tokens, std::size_t steps) {
  if (steps == 0) throw ConfigError("hybrid: steps must be at least 1");
  HybridPlan plan;
  plan.ar_ratio = ratio;
  plan.prefix_count = ar_prefix_count(ratio, tokens);
  plan.mar_steps = std::min(steps, tokens - plan.prefix_count);
  return plan;
}

std::string StepReport::csv_header() {
  return "ratio,ar_steps,mar_steps,total_steps,ar_millis,mar_millis,total_millis\n";
}

std::string StepReport::csv_row(bool timing) const {
  char buf[192];
  std::snprintf(buf, sizeof(buf), "%.4f,%zu,%zu,%zu,%.3f,%.3f,%.3f\n", ar_ratio, ar_steps,
                mar_steps, total_steps, timing ? ar_millis : 0.0, timing ? mar_millis : 0.0,
                timing ? total_millis : 0.0);
  return buf;
}

void validate_compatible(const model::ModelConfig& ar, const model::ModelConfig& mar) {
  auto fail = [](const std::string& what) {
    throw ConfigError("incompatible checkpoints: " + what);
  };
  if (ar.attention != AttentionMode::causal) fail("AR checkpoint is not causal");
  if (mar.attention != AttentionMode::bidirectional) fail("MAR checkpoint is not bidirectional");
  if (ar.codebook_size != mar.codebook_size) {
    fail("codebook size " + std::to_string(ar.codebook_size) + " vs " +
         std::to_string(mar.codebook_size));
  }
  if (ar.grid_h != mar.grid_h || ar.grid_w != mar.grid_w) fail("grid shape differs");
  if (ar.condition != mar.condition) fail("condition kind differs");
  if (ar.condition == model::ConditionKind::class_label && ar.num_classes != mar.num_classes) {
    fail("class count differs");
  }
}

HybridResult hybrid_generate(const model::ParametersF& ar_params,
                             const model::ModelConfig& ar_config,
                             const model::ParametersF& mar_params,
                             const model::ModelConfig& mar_config, const Condition& condition,
                             const HybridOptions& options, Rng& rng) {
  validate_compatible(ar_config, mar_config);
  const auto start = Clock::now();
  const std::size_t n = mar_config.grid_tokens();
  const HybridPlan plan = HybridPlan::make(options.ar_ratio, n, options.decode.steps);

  HybridResult result;
  result.report.ar_ratio = options.ar_ratio;

  const auto ar_start = Clock::now();
  const std::vector<TokenId> prefix =
      ar_sample(ar_params, ar_config, condition, plan.prefix_count, options.ar_temperature, rng);
  result.report.ar_millis = millis_since(ar_start);
  result.report.ar_steps = prefix.size();

  std::vector<decoding::Prefill> prefill;
  prefill.reserve(prefix.size());
  for (std::size_t i = 0; i < prefix.size(); ++i) prefill.push_back({i, prefix[i]});

  const auto mar_start = Clock::now();
  decoding::DecodeOptions dopt = options.decode;
  dopt.steps = plan.mar_steps;
  if (plan.mar_steps > 0) {
    decoding::DecodeResult dec = decoding::decode(mar_params, mar_config, condition, dopt, rng, prefill);
    result.grid = std::move(dec.grid);
    result.trace = std::move(dec.trace);
  } else {
    result.grid.h = mar_config.grid_h;
    result.grid.w = mar_config.grid_w;
    result.grid.indices = prefix;
  }
  result.report.mar_millis = millis_since(mar_start);
  result.report.mar_steps = result.trace.records.size();
  result.report.total_steps = result.report.ar_steps + result.report.mar_steps;
  result.report.total_millis = millis_since(start);
  return result;
}

}  // namespace maskgil::argen
