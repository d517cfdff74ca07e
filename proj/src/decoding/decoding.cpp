#include "maskgil/decoding.hpp"

#include "maskgil/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace maskgil::decoding {

using numerics::TensorF;

std::vector<float> cfg_mix(std::span<const float> cond, std::span<const float> uncond,
                           float scale) {
  if (cond.size() != uncond.size()) {
    throw ShapeError("cfg_mix: conditional has " + std::to_string(cond.size()) +
                     " logits, unconditional " + std::to_string(uncond.size()));
  }
  // The formula collapses at s = 1 and s = 0; return the operand itself since
  // u + (c - u) need not round back to c.
  if (scale == 1.0f) return std::vector<float>(cond.begin(), cond.end());
  if (scale == 0.0f) return std::vector<float>(uncond.begin(), uncond.end());
  std::vector<float> out(cond.size());
  for (std::size_t i = 0; i < cond.size(); ++i) out[i] = uncond[i] + scale * (cond[i] - uncond[i]);
  return out;
}

std::size_t sample_categorical(std::span<const double> probs, double u) {
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // u landed in the round-off gap above the cumulative sum.
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0.0) return i;
  return probs.size() - 1;
}

SampledTokens sample_tokens(const TensorF& logits, double temperature, double choice_temp,
                            double iteration_fraction, Rng& rng) {
  if (!(temperature > 0.0)) throw InputError("sample_tokens: temperature must be positive");
  if (!numerics::all_finite(logits.data())) {
    throw NumericError("sample_tokens: non-finite logits");
  }
  const std::size_t m = logits.rows();
  const std::size_t k = logits.cols();
  SampledTokens out;
  out.tokens.resize(m);
  out.confidences.resize(m);
  out.scores.resize(m);
  out.entropies.resize(m);
  std::vector<double> probs(k);
  for (std::size_t i = 0; i < m; ++i) {
    auto row = logits.row(i);
    for (std::size_t j = 0; j < k; ++j) probs[j] = static_cast<double>(row[j]) / temperature;
    numerics::softmax_inplace<double>(probs);
    const std::size_t tok = sample_categorical(probs, uniform01(rng));
    out.tokens[i] = static_cast<TokenId>(tok);
    out.confidences[i] = probs[tok];
    double h = 0.0;
    for (double p : probs)
      if (p > 0.0) h -= p * std::log(p);
    out.entropies[i] = h;
  }
  const double noise = choice_temp * (1.0 - iteration_fraction);
  if (choice_temp > 0.0) {
    for (std::size_t i = 0; i < m; ++i) {
      // Gumbel(0, 1) from u in (0, 1).
      const double u = std::max(uniform01(rng), 0x1.0p-60);
      const double g = -std::log(-std::log(u));
      out.scores[i] = std::log(std::max(out.confidences[i], 1e-300)) + noise * g;
    }
  } else {
    out.scores = out.confidences;
  }
  return out;
}

std::vector<std::size_t> select_mask(std::span<const double> confidences, std::size_t n,
                                     const std::vector<bool>& fixed) {
  if (fixed.size() != confidences.size()) throw ShapeError("select_mask: fixed mask length");
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < confidences.size(); ++i)
    if (!fixed[i]) candidates.push_back(i);
  if (n > candidates.size()) {
    throw ContractError("select_mask: cannot keep " + std::to_string(n) + " of " +
                        std::to_string(candidates.size()) + " open positions masked");
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    return confidences[a] < confidences[b];
  });
  candidates.resize(n);
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

std::size_t MaskState::masked_count() const {
  return static_cast<std::size_t>(std::count(fixed.begin(), fixed.end(), false));
}

std::string DecodeTrace::to_csv(bool timing) const {
  std::ostringstream os;
  os << "step,masked_before,newly_fixed,mean_conf,mean_entropy,millis\n";
  char buf[160];
  for (const IterationRecord& r : records) {
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%zu,%.6f,%.6f,%.3f\n", r.step, r.masked_before,
                  r.newly_fixed.size(), r.mean_confidence, r.mean_entropy,
                  timing ? r.millis : 0.0);
    os << buf;
  }
  return os.str();
}

namespace {

using Clock = std::chrono::steady_clock;

double millis_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Logits for every grid position, CFG-mixed when guidance is on.
TensorF predict(const model::ParametersF& params, const model::ModelConfig& config,
                const std::vector<TokenId>& tokens, const std::vector<Coord>& coords,
                const Condition& condition, double cfg_scale, bool guided) {
  numerics::Tape<float> tape(false);
  model::BoundParameters<float> bound(tape, params);
  std::vector<model::SequenceInput> batch;
  batch.push_back({tokens, coords, condition});
  if (guided) batch.push_back({tokens, coords, Condition{}});
  auto out = model::forward_graph(tape, bound, config, std::span<const model::SequenceInput>(batch),
                                  AttentionMode::bidirectional);
  const TensorF& all = tape.value(out.logits);
  const std::size_t n = tokens.size();
  const std::size_t k = all.cols();
  if (!guided) return all;
  TensorF mixed({n, k});
  const float s = static_cast<float>(cfg_scale);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = cfg_mix(all.row(i), all.row(n + i), s);
    std::copy(row.begin(), row.end(), mixed.row(i).begin());
  }
  return mixed;
}

}  // namespace

DecodeResult decode(const model::ParametersF& params, const model::ModelConfig& config,
                    const Condition& condition, const DecodeOptions& options, Rng& rng,
                    std::span<const Prefill> prefilled) {
  const auto start = Clock::now();
  const std::size_t n = config.grid_tokens();
  const std::vector<Coord> coords = raster_coords(config.grid_h, config.grid_w);

  MaskState state;
  state.assignment.assign(n, config.mask_token_id());
  state.confidence.assign(n, 0.0);
  state.fixed.assign(n, false);
  for (const Prefill& p : prefilled) {
    if (p.position >= n) throw InputError("prefill position outside the grid");
    if (p.token < 0 || static_cast<std::size_t>(p.token) >= config.codebook_size) {
      throw InputError("prefill token outside the codebook");
    }
    if (state.fixed[p.position]) throw InputError("duplicate prefill position");
    state.assignment[p.position] = p.token;
    state.confidence[p.position] = 1.0;
    state.fixed[p.position] = true;
  }

  DecodeResult result;
  result.grid.h = config.grid_h;
  result.grid.w = config.grid_w;
  const std::size_t open = state.masked_count();
  if (open > 0) {
    if (options.steps == 0 || options.steps > open) {
      throw ContractError("decode: " + std::to_string(options.steps) + " steps incompatible with " +
                          std::to_string(open) + " open positions");
    }
    const schedules::ScheduleSpec spec{options.schedule, options.steps, open};
    const std::vector<std::size_t> plan = schedules::plan_steps(spec);
    const bool guided = options.cfg_scale != 1.0;

    for (std::size_t t = 1; t <= options.steps; ++t) {
      const auto iter_start = Clock::now();
      state.iteration = t;
      std::vector<std::size_t> masked;
      for (std::size_t i = 0; i < n; ++i)
        if (!state.fixed[i]) masked.push_back(i);

      const TensorF logits =
          predict(params, config, state.assignment, coords, condition, options.cfg_scale, guided);
      result.trace.forward_passes += guided ? 2 : 1;

      TensorF rows({masked.size(), logits.cols()});
      for (std::size_t j = 0; j < masked.size(); ++j) {
        auto src = logits.row(masked[j]);
        std::copy(src.begin(), src.end(), rows.row(j).begin());
      }
      const double fraction = static_cast<double>(t) / static_cast<double>(options.steps);
      const SampledTokens sampled =
          sample_tokens(rows, options.temperature, options.choice_temp, fraction, rng);

      std::vector<double> scores(n, 1.0);
      for (std::size_t j = 0; j < masked.size(); ++j) scores[masked[j]] = sampled.scores[j];
      const std::vector<std::size_t> keep = select_mask(scores, plan[t - 1], state.fixed);

      IterationRecord rec;
      rec.step = t;
      rec.masked_before = masked.size();
      double conf_sum = 0.0;
      double entropy_sum = 0.0;
      std::size_t k = 0;
      for (std::size_t j = 0; j < masked.size(); ++j) {
        const std::size_t pos = masked[j];
        entropy_sum += sampled.entropies[j];
        while (k < keep.size() && keep[k] < pos) ++k;
        if (k < keep.size() && keep[k] == pos) {
          state.confidence[pos] = sampled.confidences[j];
          continue;
        }
        state.assignment[pos] = sampled.tokens[j];
        state.confidence[pos] = 1.0;
        state.fixed[pos] = true;
        rec.newly_fixed.push_back(pos);
        conf_sum += sampled.confidences[j];
      }
      rec.mean_confidence =
          rec.newly_fixed.empty() ? 0.0 : conf_sum / static_cast<double>(rec.newly_fixed.size());
      rec.mean_entropy = entropy_sum / static_cast<double>(masked.size());
      rec.millis = millis_since(iter_start);
      result.trace.records.push_back(std::move(rec));
    }
  }

  result.grid.indices = state.assignment;
  result.trace.total_millis = millis_since(start);
  return result;
}

}  // namespace maskgil::decoding
