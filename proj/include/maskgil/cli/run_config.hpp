#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "maskgil/model/config.hpp"
#include "maskgil/schedules.hpp"
#include "maskgil/training/config.hpp"
#include "maskgil/training/task.hpp"

namespace maskgil::cli {

struct DecodeConfig {
  schedules::ScheduleKind schedule = schedules::ScheduleKind::arccos;
  std::size_t steps = 8;
  double cfg_scale = 1.0;
  double temperature = 1.0;
  double choice_temp = 0.0;

  friend bool operator==(const DecodeConfig&, const DecodeConfig&) = default;
};

// One JSON document:
//   { "model": {...}, "train": {...}, "decode": {...}, "task": {...}, "seed": N }
// Unknown keys anywhere are rejected; missing keys take defaults. Task
// defaults follow the model (K, grid, classes) with zero noise. `seed`
// drives parameter initialisation; train.seed drives the data stream.
struct RunConfig {
  model::ModelConfig model;
  training::TrainConfig train;
  DecodeConfig decode;
  training::SyntheticTask task;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

nlohmann::ordered_json to_json(const DecodeConfig& config);
DecodeConfig decode_config_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::ordered_json& j);

// Parse errors are ConfigError.
RunConfig parse_run_config(const std::string& text);
std::string serialize_run_config(const RunConfig& config);
RunConfig load_run_config(const std::string& path);

}  // namespace maskgil::cli
