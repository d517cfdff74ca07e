#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "maskgil/types.hpp"

namespace maskgil::model {

enum class ConditionKind { class_label, text };

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t hidden = 16;
  std::size_t heads = 2;
  std::size_t codebook_size = 32;
  std::size_t grid_h = 4;
  std::size_t grid_w = 4;
  ConditionKind condition = ConditionKind::class_label;
  std::size_t num_classes = 10;
  // Prefill rows in front of the grid; must be 1 for class conditioning.
  std::size_t condition_slots = 1;
  // Width of the hashed text stub fed into the learned text projection.
  std::size_t text_dim = 32;
  bool qk_norm = false;
  bool post_norm = false;
  double rope_base = 10000.0;
  // SwiGLU width is round_up(int(8 * hidden / 3), ffn_multiple).
  std::size_t ffn_multiple = 16;
  AttentionMode attention = AttentionMode::bidirectional;
  double init_std = 0.02;
  double norm_eps = 1e-5;

  TokenId mask_token_id() const { return static_cast<TokenId>(codebook_size); }
  std::size_t head_dim() const { return hidden / heads; }
  std::size_t ffn_hidden() const;
  std::size_t grid_tokens() const { return grid_h * grid_w; }
  std::size_t sequence_length() const { return condition_slots + grid_tokens(); }

  // Throws ConfigError on any violated invariant.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Table-3 style presets. The four published sizes use a 16384-entry
// codebook, a 16x16 grid and 1000 classes.
ModelConfig preset_b();
ModelConfig preset_l();
ModelConfig preset_xl();
ModelConfig preset_xxl();
// 2 layers, hidden 16, 2 heads, K = 32, 4x4 grid.
ModelConfig preset_micro();
std::optional<ModelConfig> preset_by_name(std::string_view name);

std::string to_string(AttentionMode mode);
AttentionMode attention_mode_from_string(std::string_view s);
std::string to_string(ConditionKind kind);
ConditionKind condition_kind_from_string(std::string_view s);

// JSON mapping. from_json rejects unknown keys and fills missing ones with
// the defaults above; it does not call validate().
nlohmann::ordered_json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::ordered_json& j);

}  // namespace maskgil::model
