#pragma once

#include <cstddef>
#include <cstdint>

#include <json.hpp>

namespace maskgil::training {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.96;
  double weight_decay = 1e-5;
  double adam_eps = 1e-8;
  double label_smoothing = 0.1;
  double cond_dropout = 0.1;
  std::size_t batch_size = 32;
  std::size_t steps = 1000;
  std::uint64_t seed = 0;

  // Throws ConfigError on out-of-range rates or a zero batch.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

nlohmann::ordered_json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::ordered_json& j);

}  // namespace maskgil::training
