#include "maskgil/cli/run_config.hpp"

#include <fstream>
#include <sstream>

#include "maskgil/errors.hpp"
#include "maskgil/json_fields.hpp"

namespace maskgil::cli {

using nlohmann::ordered_json;

void RunConfig::validate() const {
  model.validate();
  train.validate();
  task.validate();
  task.check_model(model);
  schedules::ScheduleSpec{decode.schedule, decode.steps, model.grid_tokens()}.validate();
  if (!(decode.temperature > 0.0)) throw ConfigError("decode: temperature must be positive");
  if (!(decode.choice_temp >= 0.0)) throw ConfigError("decode: choice_temp must be >= 0");
}

ordered_json to_json(const DecodeConfig& c) {
  ordered_json j;
  j["schedule"] = schedules::to_string(c.schedule);
  j["steps"] = c.steps;
  j["cfg_scale"] = c.cfg_scale;
  j["temperature"] = c.temperature;
  j["choice_temp"] = c.choice_temp;
  return j;
}

DecodeConfig decode_config_from_json(const ordered_json& j) {
  DecodeConfig c;
  JsonFields f(j, "decode");
  std::string schedule = schedules::to_string(c.schedule);
  f.get("schedule", schedule);
  c.schedule = schedules::kind_from_string(schedule);
  f.get("steps", c.steps);
  f.get("cfg_scale", c.cfg_scale);
  f.get("temperature", c.temperature);
  f.get("choice_temp", c.choice_temp);
  f.finish();
  return c;
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j;
  j["model"] = model::to_json(c.model);
  j["train"] = training::to_json(c.train);
  j["decode"] = to_json(c.decode);
  j["task"] = training::to_json(c.task);
  j["seed"] = c.seed;
  return j;
}

RunConfig run_config_from_json(const ordered_json& j) {
  RunConfig c;
  JsonFields f(j, "config");
  ordered_json model = ordered_json::object();
  ordered_json train = ordered_json::object();
  ordered_json decode = ordered_json::object();
  ordered_json task = ordered_json::object();
  f.get("model", model);
  f.get("train", train);
  f.get("decode", decode);
  f.get("task", task);
  f.get("seed", c.seed);
  f.finish();
  c.model = model::model_config_from_json(model);
  c.train = training::train_config_from_json(train);
  c.decode = decode_config_from_json(decode);
  c.task = training::task_from_json(task, training::SyntheticTask::for_model(c.model, 0.0));
  return c;
}

RunConfig parse_run_config(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

std::string serialize_run_config(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open config " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace maskgil::cli
