#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace maskgil {

using TokenId = std::int32_t;

// Every stochastic operation takes an explicit, caller-seeded generator.
using Rng = std::mt19937_64;

// Uniform double in [0, 1) drawn from the top 53 bits of one engine output.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

enum class AttentionMode { bidirectional, causal };

// Grid coordinate of a sequence position. Condition slots carry the
// sentinel, which the rotary embedding treats as "no rotation".
struct Coord {
  std::int32_t row = -1;
  std::int32_t col = -1;

  static constexpr Coord sentinel() { return Coord{-1, -1}; }
  constexpr bool is_sentinel() const { return row < 0 && col < 0; }
  friend constexpr bool operator==(Coord, Coord) = default;
};

struct ClassLabel {
  std::int32_t id = 0;
  friend bool operator==(const ClassLabel&, const ClassLabel&) = default;
};

struct TextPrompt {
  std::string text;
  friend bool operator==(const TextPrompt&, const TextPrompt&) = default;
};

// std::monostate is the null (unconditional) condition used by CFG.
using Condition = std::variant<std::monostate, ClassLabel, TextPrompt>;

inline bool is_null(const Condition& c) { return std::holds_alternative<std::monostate>(c); }

// h x w codebook indices in raster order.
struct TokenGrid {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<TokenId> indices;

  std::size_t size() const { return indices.size(); }
  TokenId at(std::size_t r, std::size_t c) const { return indices[r * w + c]; }
  friend bool operator==(const TokenGrid&, const TokenGrid&) = default;
};

// Throws InputError when the grid is malformed or any index is >= K.
void validate_grid(const TokenGrid& grid, std::size_t codebook_size);

// Raster-order coordinates of an h x w grid.
std::vector<Coord> raster_coords(std::size_t h, std::size_t w);

}  // namespace maskgil
