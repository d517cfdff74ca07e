#pragma once

#include <cstddef>
#include <vector>

#include <json.hpp>

#include "maskgil/model/config.hpp"
#include "maskgil/types.hpp"

namespace maskgil::training {

// Class-patterned grids: token(i, j | c) = (c + i * w + j) mod K, each entry
// independently replaced by a different uniform token with probability noise.
struct SyntheticTask {
  std::size_t num_classes = 10;
  std::size_t codebook_size = 32;
  std::size_t grid_h = 4;
  std::size_t grid_w = 4;
  double noise = 0.0;

  TokenId token(std::size_t c, std::size_t i, std::size_t j) const;
  TokenGrid clean(std::size_t c) const;
  TokenGrid sample(std::size_t c, Rng& rng) const;

  void validate() const;
  // ConfigError unless the task and model agree on K, grid and class count.
  void check_model(const model::ModelConfig& config) const;

  static SyntheticTask for_model(const model::ModelConfig& config, double noise);

  friend bool operator==(const SyntheticTask&, const SyntheticTask&) = default;
};

// The condition a model of this config receives for class c: the label
// itself, or the prompt "class <c>" for text-conditioned models.
Condition condition_for_class(const model::ModelConfig& config, std::size_t c);

nlohmann::ordered_json to_json(const SyntheticTask& task);
// Missing keys keep the values of `base`.
SyntheticTask task_from_json(const nlohmann::ordered_json& j, const SyntheticTask& base = {});

}  // namespace maskgil::training
