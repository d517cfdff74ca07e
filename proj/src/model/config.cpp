#include "maskgil/model/config.hpp"

#include <string>

#include "maskgil/errors.hpp"
#include "maskgil/json_fields.hpp"

namespace maskgil {

void validate_grid(const TokenGrid& grid, std::size_t codebook_size) {
  if (grid.h * grid.w != grid.indices.size()) {
    throw InputError("token grid " + std::to_string(grid.h) + "x" + std::to_string(grid.w) +
                     " holds " + std::to_string(grid.indices.size()) + " indices");
  }
  for (TokenId t : grid.indices) {
    if (t < 0 || static_cast<std::size_t>(t) >= codebook_size) {
      throw InputError("token grid index " + std::to_string(t) + " outside codebook of size " +
                       std::to_string(codebook_size));
    }
  }
}

std::vector<Coord> raster_coords(std::size_t h, std::size_t w) {
  std::vector<Coord> coords;
  coords.reserve(h * w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      coords.push_back(Coord{static_cast<std::int32_t>(r), static_cast<std::int32_t>(c)});
  return coords;
}

}  // namespace maskgil

namespace maskgil::model {

std::size_t ModelConfig::ffn_hidden() const {
  const std::size_t base = (8 * hidden) / 3;
  const std::size_t m = ffn_multiple == 0 ? 1 : ffn_multiple;
  return ((base + m - 1) / m) * m;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (hidden == 0 || heads == 0) fail("hidden and heads must be positive");
  if (hidden % heads != 0) fail("hidden must be divisible by heads");
  if (head_dim() % 4 != 0) fail("per-head dimension must be divisible by 4 for 2D RoPE");
  if (codebook_size < 2) fail("codebook_size must be at least 2");
  if (grid_h == 0 || grid_w == 0) fail("grid dimensions must be positive");
  if (condition_slots == 0) fail("condition_slots must be at least 1");
  if (condition == ConditionKind::class_label) {
    if (num_classes == 0) fail("num_classes must be positive");
    if (condition_slots != 1) fail("class conditioning uses exactly one condition slot");
  } else if (text_dim == 0) {
    fail("text_dim must be positive");
  }
  if (!(rope_base > 1.0)) fail("rope_base must exceed 1");
  if (ffn_multiple == 0) fail("ffn_multiple must be positive");
  if (!(init_std > 0.0)) fail("init_std must be positive");
  if (!(norm_eps > 0.0)) fail("norm_eps must be positive");
}

namespace {

ModelConfig preset_shape(std::size_t layers, std::size_t hidden, std::size_t heads, bool stabilized) {
  ModelConfig c;
  c.layers = layers;
  c.hidden = hidden;
  c.heads = heads;
  c.codebook_size = 16384;
  c.grid_h = 16;
  c.grid_w = 16;
  c.num_classes = 1000;
  c.qk_norm = stabilized;
  c.post_norm = stabilized;
  c.ffn_multiple = 256;
  return c;
}

}  // namespace

ModelConfig preset_b() { return preset_shape(12, 768, 12, false); }
ModelConfig preset_l() { return preset_shape(24, 1024, 16, false); }
ModelConfig preset_xl() { return preset_shape(36, 1280, 20, false); }
ModelConfig preset_xxl() { return preset_shape(48, 1536, 24, true); }
ModelConfig preset_micro() { return ModelConfig{}; }

std::optional<ModelConfig> preset_by_name(std::string_view name) {
  if (name == "B") return preset_b();
  if (name == "L") return preset_l();
  if (name == "XL") return preset_xl();
  if (name == "XXL") return preset_xxl();
  if (name == "micro") return preset_micro();
  return std::nullopt;
}

std::string to_string(AttentionMode mode) {
  return mode == AttentionMode::causal ? "causal" : "bidirectional";
}

AttentionMode attention_mode_from_string(std::string_view s) {
  if (s == "causal") return AttentionMode::causal;
  if (s == "bidirectional") return AttentionMode::bidirectional;
  throw ConfigError("unknown attention mode '" + std::string(s) + "'");
}

std::string to_string(ConditionKind kind) {
  return kind == ConditionKind::text ? "text" : "class";
}

ConditionKind condition_kind_from_string(std::string_view s) {
  if (s == "class") return ConditionKind::class_label;
  if (s == "text") return ConditionKind::text;
  throw ConfigError("unknown condition kind '" + std::string(s) + "'");
}

nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["layers"] = c.layers;
  j["hidden"] = c.hidden;
  j["heads"] = c.heads;
  j["codebook_size"] = c.codebook_size;
  j["grid_h"] = c.grid_h;
  j["grid_w"] = c.grid_w;
  j["condition"] = to_string(c.condition);
  j["num_classes"] = c.num_classes;
  j["condition_slots"] = c.condition_slots;
  j["text_dim"] = c.text_dim;
  j["qk_norm"] = c.qk_norm;
  j["post_norm"] = c.post_norm;
  j["rope_base"] = c.rope_base;
  j["ffn_multiple"] = c.ffn_multiple;
  j["attention"] = to_string(c.attention);
  j["init_std"] = c.init_std;
  j["norm_eps"] = c.norm_eps;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::ordered_json& j) {
  ModelConfig c;
  JsonFields f(j, "model");
  std::string preset;
  f.get("preset", preset);
  if (!preset.empty()) {
    auto p = preset_by_name(preset);
    if (!p) throw ConfigError("model: unknown preset '" + preset + "'");
    c = *p;
  }
  f.get("layers", c.layers);
  f.get("hidden", c.hidden);
  f.get("heads", c.heads);
  f.get("codebook_size", c.codebook_size);
  f.get("grid_h", c.grid_h);
  f.get("grid_w", c.grid_w);
  std::string condition = to_string(c.condition);
  f.get("condition", condition);
  c.condition = condition_kind_from_string(condition);
  f.get("num_classes", c.num_classes);
  f.get("condition_slots", c.condition_slots);
  f.get("text_dim", c.text_dim);
  f.get("qk_norm", c.qk_norm);
  f.get("post_norm", c.post_norm);
  f.get("rope_base", c.rope_base);
  f.get("ffn_multiple", c.ffn_multiple);
  std::string attention = to_string(c.attention);
  f.get("attention", attention);
  c.attention = attention_mode_from_string(attention);
  f.get("init_std", c.init_std);
  f.get("norm_eps", c.norm_eps);
  f.finish();
  return c;
}

}  // namespace maskgil::model
