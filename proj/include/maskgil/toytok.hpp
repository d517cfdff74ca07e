#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "maskgil/types.hpp"

namespace maskgil::toytok {

using Color = std::array<double, 3>;

// K distinct RGB centroids with channels in [0, 255].
struct Codebook {
  std::vector<Color> entries;

  std::size_t size() const noexcept { return entries.size(); }
  // Seeded construction; every entry is a distinct integer color.
  static Codebook synthetic(std::size_t k, std::uint64_t seed);
  // Throws InputError when K < 2 or two entries coincide.
  void validate() const;
};

// Row-major H x W x 3 image, 8 bits per channel.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(std::size_t h, std::size_t w) : height(h), width(w), rgb(h * w * 3, 0) {}
  std::uint8_t* pixel(std::size_t r, std::size_t c) { return &rgb[(r * width + c) * 3]; }
  const std::uint8_t* pixel(std::size_t r, std::size_t c) const { return &rgb[(r * width + c) * 3]; }
  friend bool operator==(const Image&, const Image&) = default;
};

// Index of the nearest entry (squared Euclidean), lowest index on ties.
std::size_t nearest(const Codebook& codebook, const Color& v);

// Mean colour per p x p patch, quantised to its nearest codebook entry.
TokenGrid encode(const Image& image, std::size_t patch, const Codebook& codebook);

// Paints each token as a p x p block of its (rounded) codebook colour.
Image decode_tokens(const TokenGrid& grid, std::size_t patch, const Codebook& codebook);

// Fraction of the K indices used at least once across the corpus.
double codebook_usage(std::span<const TokenGrid> grids, std::size_t k);

// Binary P6, maxval 255.
std::vector<std::uint8_t> write_ppm(const Image& image);
Image read_ppm(std::span<const std::uint8_t> bytes);
void save_ppm(const Image& image, const std::string& path);
Image load_ppm(const std::string& path);

}  // namespace maskgil::toytok
