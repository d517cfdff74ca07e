#include "maskgil/training/task.hpp"

#include <string>

#include "maskgil/errors.hpp"
#include "maskgil/json_fields.hpp"

namespace maskgil::training {

TokenId SyntheticTask::token(std::size_t c, std::size_t i, std::size_t j) const {
  return static_cast<TokenId>((c + i * grid_w + j) % codebook_size);
}

TokenGrid SyntheticTask::clean(std::size_t c) const {
  TokenGrid g;
  g.h = grid_h;
  g.w = grid_w;
  g.indices.reserve(grid_h * grid_w);
  for (std::size_t i = 0; i < grid_h; ++i)
    for (std::size_t j = 0; j < grid_w; ++j) g.indices.push_back(token(c, i, j));
  return g;
}

TokenGrid SyntheticTask::sample(std::size_t c, Rng& rng) const {
  TokenGrid g = clean(c);
  if (noise <= 0.0) return g;
  const auto k = static_cast<double>(codebook_size);
  for (TokenId& t : g.indices) {
    if (uniform01(rng) >= noise) continue;
    // Uniform over the K - 1 other tokens.
    const auto shift = 1 + static_cast<std::size_t>(uniform01(rng) * (k - 1.0));
    t = static_cast<TokenId>((static_cast<std::size_t>(t) + shift) % codebook_size);
  }
  return g;
}

void SyntheticTask::validate() const {
  if (num_classes == 0) throw ConfigError("task: num_classes must be positive");
  if (codebook_size < 2) throw ConfigError("task: codebook_size must be at least 2");
  if (grid_h == 0 || grid_w == 0) throw ConfigError("task: grid must be non-empty");
  if (!(noise >= 0.0 && noise < 1.0)) throw ConfigError("task: noise must lie in [0, 1)");
}

void SyntheticTask::check_model(const model::ModelConfig& config) const {
  if (config.codebook_size != codebook_size || config.grid_h != grid_h ||
      config.grid_w != grid_w) {
    throw ConfigError("task and model disagree on codebook size or grid shape");
  }
  if (config.condition == model::ConditionKind::class_label && config.num_classes != num_classes) {
    throw ConfigError("task has " + std::to_string(num_classes) + " classes, model " +
                      std::to_string(config.num_classes));
  }
}

SyntheticTask SyntheticTask::for_model(const model::ModelConfig& config, double noise) {
  return SyntheticTask{config.num_classes, config.codebook_size, config.grid_h, config.grid_w,
                       noise};
}

Condition condition_for_class(const model::ModelConfig& config, std::size_t c) {
  if (config.condition == model::ConditionKind::text) {
    return TextPrompt{"class " + std::to_string(c)};
  }
  return ClassLabel{static_cast<std::int32_t>(c)};
}

nlohmann::ordered_json to_json(const SyntheticTask& t) {
  nlohmann::ordered_json j;
  j["num_classes"] = t.num_classes;
  j["codebook_size"] = t.codebook_size;
  j["grid_h"] = t.grid_h;
  j["grid_w"] = t.grid_w;
  j["noise"] = t.noise;
  return j;
}

SyntheticTask task_from_json(const nlohmann::ordered_json& j, const SyntheticTask& base) {
  SyntheticTask t = base;
  JsonFields f(j, "task");
  f.get("num_classes", t.num_classes);
  f.get("codebook_size", t.codebook_size);
  f.get("grid_h", t.grid_h);
  f.get("grid_w", t.grid_w);
  f.get("noise", t.noise);
  f.finish();
  return t;
}

}  // namespace maskgil::training
