#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "maskgil/model/config.hpp"
#include "maskgil/model/model.hpp"
#include "maskgil/training/config.hpp"
#include "maskgil/types.hpp"

namespace maskgil::training {

// Container layout, all integers little-endian:
//   "MGIL" | u32 version | u64 header length | JSON header | payload
// The header lists every tensor (name, shape, dtype, offset, nbytes) with
// offsets relative to the payload start, contiguous in manifest order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorEntry {
  std::string name;
  std::vector<std::size_t> shape;
  std::string dtype;  // "f32" or "i32"
  std::uint64_t offset = 0;
  std::uint64_t nbytes = 0;
};

struct CheckpointHeader {
  std::string kind;  // "model" or "tokens"
  nlohmann::ordered_json json;
  std::vector<TensorEntry> tensors;
  std::uint64_t payload_offset = 0;  // absolute file offset of the payload
};

struct Checkpoint {
  model::ModelConfig model;
  TrainConfig train;
  std::uint64_t step = 0;
  model::ParametersF params;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Parses the magic, version and JSON header without reading the payload.
CheckpointHeader read_header(const std::string& path);
CheckpointHeader parse_header(std::span<const std::uint8_t> bytes);
// Model config stored in a header-only read.
model::ModelConfig header_model_config(const CheckpointHeader& header);

// Token grids share the container with a single i32 tensor "indices" [h, w].
std::vector<std::uint8_t> serialize_token_grid(const TokenGrid& grid);
TokenGrid deserialize_token_grid(std::span<const std::uint8_t> bytes);
void save_token_grid(const TokenGrid& grid, const std::string& path);
TokenGrid load_token_grid(const std::string& path);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace maskgil::training
