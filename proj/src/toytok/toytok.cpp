#include "maskgil/toytok.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <set>

#include "maskgil/errors.hpp"

namespace maskgil::toytok {

Codebook Codebook::synthetic(std::size_t k, std::uint64_t seed) {
  if (k < 2) throw InputError("codebook needs at least 2 entries");
  if (k > (1u << 24)) throw InputError("codebook larger than the 24-bit colour space");
  Rng rng(seed);
  Codebook cb;
  cb.entries.reserve(k);
  std::set<std::uint32_t> seen;
  while (cb.entries.size() < k) {
    const auto packed = static_cast<std::uint32_t>(rng() & 0xFFFFFFu);
    if (!seen.insert(packed).second) continue;
    cb.entries.push_back({static_cast<double>(packed >> 16), static_cast<double>((packed >> 8) & 0xFF),
                          static_cast<double>(packed & 0xFF)});
  }
  return cb;
}

void Codebook::validate() const {
  if (entries.size() < 2) throw InputError("codebook needs at least 2 entries");
  std::set<Color> unique(entries.begin(), entries.end());
  if (unique.size() != entries.size()) throw InputError("codebook entries must be distinct");
}

std::size_t nearest(const Codebook& codebook, const Color& v) {
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t i = 0; i < codebook.size(); ++i) {
    const Color& e = codebook.entries[i];
    double d = 0.0;
    for (int c = 0; c < 3; ++c) d += (v[c] - e[c]) * (v[c] - e[c]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

TokenGrid encode(const Image& image, std::size_t patch, const Codebook& codebook) {
  if (patch == 0) throw InputError("patch size must be positive");
  if (image.height % patch != 0 || image.width % patch != 0) {
    throw InputError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                     " not divisible by patch " + std::to_string(patch));
  }
  codebook.validate();
  TokenGrid grid;
  grid.h = image.height / patch;
  grid.w = image.width / patch;
  grid.indices.reserve(grid.h * grid.w);
  const double area = static_cast<double>(patch * patch);
  for (std::size_t gr = 0; gr < grid.h; ++gr) {
    for (std::size_t gc = 0; gc < grid.w; ++gc) {
      Color mean{0.0, 0.0, 0.0};
      for (std::size_t r = 0; r < patch; ++r)
        for (std::size_t c = 0; c < patch; ++c) {
          const std::uint8_t* px = image.pixel(gr * patch + r, gc * patch + c);
          for (int ch = 0; ch < 3; ++ch) mean[ch] += px[ch];
        }
      for (double& m : mean) m /= area;
      grid.indices.push_back(static_cast<TokenId>(nearest(codebook, mean)));
    }
  }
  return grid;
}

Image decode_tokens(const TokenGrid& grid, std::size_t patch, const Codebook& codebook) {
  if (patch == 0) throw InputError("patch size must be positive");
  validate_grid(grid, codebook.size());
  Image img(grid.h * patch, grid.w * patch);
  for (std::size_t gr = 0; gr < grid.h; ++gr)
    for (std::size_t gc = 0; gc < grid.w; ++gc) {
      const Color& e = codebook.entries[static_cast<std::size_t>(grid.at(gr, gc))];
      std::uint8_t px[3];
      for (int ch = 0; ch < 3; ++ch)
        px[ch] = static_cast<std::uint8_t>(std::clamp(std::lround(e[ch]), 0L, 255L));
      for (std::size_t r = 0; r < patch; ++r)
        for (std::size_t c = 0; c < patch; ++c)
          std::copy(px, px + 3, img.pixel(gr * patch + r, gc * patch + c));
    }
  return img;
}

double codebook_usage(std::span<const TokenGrid> grids, std::size_t k) {
  if (grids.empty()) throw InputError("codebook_usage: empty corpus");
  if (k == 0) throw InputError("codebook_usage: K must be positive");
  std::vector<bool> used(k, false);
  for (const TokenGrid& g : grids) {
    validate_grid(g, k);
    for (TokenId t : g.indices) used[static_cast<std::size_t>(t)] = true;
  }
  const auto count = std::count(used.begin(), used.end(), true);
  return static_cast<double>(count) / static_cast<double>(k);
}

std::vector<std::uint8_t> write_ppm(const Image& image) {
  if (image.rgb.size() != image.height * image.width * 3) {
    throw ShapeError("image buffer does not match its dimensions");
  }
  const std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.rgb.begin(), image.rgb.end());
  return out;
}

namespace {

struct HeaderReader {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;

  static bool space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

  void skip_space_and_comments() {
    while (pos < bytes.size()) {
      if (space(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1u << 30)) throw FormatError(std::string("PPM: ") + what + " too large");
      ++pos;
    }
    if (pos == start) {
      throw FormatError(std::string("PPM: expected ") + what + " at byte " + std::to_string(start));
    }
    return v;
  }
};

}  // namespace

Image read_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw FormatError("PPM: missing P6 magic at byte 0");
  }
  HeaderReader rd{bytes, 2};
  const std::size_t w = rd.number("width");
  const std::size_t h = rd.number("height");
  const std::size_t maxval = rd.number("maxval");
  if (maxval != 255) throw FormatError("PPM: maxval must be 255, got " + std::to_string(maxval));
  if (rd.pos >= bytes.size() || !HeaderReader::space(bytes[rd.pos])) {
    throw FormatError("PPM: missing separator after header at byte " + std::to_string(rd.pos));
  }
  ++rd.pos;
  const std::size_t need = w * h * 3;
  if (bytes.size() - rd.pos != need) {
    throw FormatError("PPM: expected " + std::to_string(need) + " pixel bytes at byte " +
                      std::to_string(rd.pos) + ", found " + std::to_string(bytes.size() - rd.pos));
  }
  Image img(h, w);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(rd.pos), bytes.end(), img.rgb.begin());
  return img;
}

void save_ppm(const Image& image, const std::string& path) {
  const auto bytes = write_ppm(image);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw InputError("write failed: " + path);
}

Image load_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return read_ppm(bytes);
}

}  // namespace maskgil::toytok
