#include "maskgil/training/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "maskgil/errors.hpp"

namespace maskgil::training {

namespace {

constexpr char kMagic[4] = {'M', 'G', 'I', 'L'};
constexpr std::size_t kPreamble = 4 + 4 + 8;
// Generous bound that still rejects garbage lengths before allocating.
constexpr std::uint64_t kMaxHeader = 64ull << 20;

template <class U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <class U>
U get_le(std::span<const std::uint8_t> bytes, std::size_t at) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[at + i]) << (8 * i);
  return v;
}

// f32 and i32 both travel as their 32-bit patterns.
template <class V>
void put_words(std::vector<std::uint8_t>& out, std::span<const V> values) {
  static_assert(sizeof(V) == 4);
  for (V x : values) {
    std::uint32_t w;
    std::memcpy(&w, &x, 4);
    put_le(out, w);
  }
}

template <class V>
void get_words(std::span<const std::uint8_t> bytes, std::size_t at, std::span<V> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto w = get_le<std::uint32_t>(bytes, at + 4 * i);
    std::memcpy(&out[i], &w, 4);
  }
}

FormatError format_error(const std::string& what, std::uint64_t offset) {
  return FormatError("checkpoint: " + what + " at offset " + std::to_string(offset));
}

struct Blob {
  std::string name;
  std::vector<std::size_t> shape;
  std::string dtype;
  std::vector<std::uint8_t> bytes;
};

std::vector<std::uint8_t> assemble(nlohmann::ordered_json header, const std::vector<Blob>& blobs) {
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const Blob& b : blobs) {
    nlohmann::ordered_json t;
    t["name"] = b.name;
    t["shape"] = b.shape;
    t["dtype"] = b.dtype;
    t["offset"] = offset;
    t["nbytes"] = b.bytes.size();
    tensors.push_back(std::move(t));
    offset += b.bytes.size();
  }
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const Blob& b : blobs) out.insert(out.end(), b.bytes.begin(), b.bytes.end());
  return out;
}

std::uint64_t shape_elems(const std::vector<std::size_t>& shape) {
  std::uint64_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

// Payload extent check shared by both container kinds; `total` is the full
// byte count when known, or 0 for header-only reads.
void check_manifest(const CheckpointHeader& h, std::uint64_t total) {
  std::uint64_t expect = 0;
  for (const TensorEntry& t : h.tensors) {
    if (t.dtype != "f32" && t.dtype != "i32") {
      throw format_error("tensor '" + t.name + "' has unknown dtype '" + t.dtype + "'",
                         h.payload_offset + t.offset);
    }
    if (t.offset != expect) {
      throw format_error("tensor '" + t.name + "' is not contiguous", h.payload_offset + t.offset);
    }
    if (t.nbytes != 4 * shape_elems(t.shape)) {
      throw format_error("tensor '" + t.name + "' byte count disagrees with its shape",
                         h.payload_offset + t.offset);
    }
    expect += t.nbytes;
  }
  if (total != 0 && total - h.payload_offset != expect) {
    throw format_error("payload holds " + std::to_string(total - h.payload_offset) +
                           " bytes, manifest expects " + std::to_string(expect),
                       h.payload_offset);
  }
}

}  // namespace

CheckpointHeader parse_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPreamble) throw format_error("truncated preamble", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw format_error("bad magic", 0);
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kCheckpointVersion) {
    throw format_error("unsupported version " + std::to_string(version), 4);
  }
  const auto len = get_le<std::uint64_t>(bytes, 8);
  if (len > kMaxHeader) throw format_error("implausible header length", 8);
  if (bytes.size() < kPreamble + len) throw format_error("truncated header", bytes.size());

  CheckpointHeader h;
  h.payload_offset = kPreamble + len;
  try {
    h.json = nlohmann::ordered_json::parse(bytes.begin() + kPreamble,
                                           bytes.begin() + static_cast<std::ptrdiff_t>(h.payload_offset));
    h.kind = h.json.at("kind").get<std::string>();
    for (const auto& t : h.json.at("tensors")) {
      TensorEntry e;
      e.name = t.at("name").get<std::string>();
      e.shape = t.at("shape").get<std::vector<std::size_t>>();
      e.dtype = t.at("dtype").get<std::string>();
      e.offset = t.at("offset").get<std::uint64_t>();
      e.nbytes = t.at("nbytes").get<std::uint64_t>();
      h.tensors.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("malformed header: ") + e.what(), kPreamble);
  }
  check_manifest(h, 0);
  return h;
}

CheckpointHeader read_header(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path);
  std::vector<std::uint8_t> pre(kPreamble);
  f.read(reinterpret_cast<char*>(pre.data()), kPreamble);
  pre.resize(static_cast<std::size_t>(f.gcount()));
  if (pre.size() < kPreamble) throw format_error("truncated preamble", pre.size());
  const auto len = get_le<std::uint64_t>(pre, 8);
  if (len > kMaxHeader) throw format_error("implausible header length", 8);
  pre.resize(kPreamble + len);
  f.read(reinterpret_cast<char*>(pre.data() + kPreamble), static_cast<std::streamsize>(len));
  pre.resize(kPreamble + static_cast<std::size_t>(f.gcount()));
  return parse_header(pre);
}

model::ModelConfig header_model_config(const CheckpointHeader& header) {
  if (header.kind != "model") throw format_error("not a model checkpoint", kPreamble);
  try {
    return model::model_config_from_json(header.json.at("model"));
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("header: ") + e.what(), kPreamble);
  }
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::ordered_json header;
  header["kind"] = "model";
  header["model"] = model::to_json(ckpt.model);
  header["train"] = to_json(ckpt.train);
  header["step"] = ckpt.step;
  std::vector<Blob> blobs;
  for (const auto& e : ckpt.params.entries()) {
    Blob b{e.name, e.value.shape(), "f32", {}};
    b.bytes.reserve(e.value.size() * 4);
    put_words<float>(b.bytes, e.value.data());
    blobs.push_back(std::move(b));
  }
  return assemble(std::move(header), blobs);
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  const CheckpointHeader h = parse_header(bytes);
  check_manifest(h, bytes.size());
  Checkpoint ckpt;
  ckpt.model = header_model_config(h);
  try {
    ckpt.train = train_config_from_json(h.json.at("train"));
    ckpt.step = h.json.at("step").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("header: ") + e.what(), kPreamble);
  } catch (const ConfigError& e) {
    throw format_error(e.what(), kPreamble);
  }
  const auto expected = model::manifest(ckpt.model);
  if (expected.size() != h.tensors.size()) {
    throw format_error("tensor count does not match the model config", kPreamble);
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const TensorEntry& t = h.tensors[i];
    if (t.name != expected[i].name || t.shape != expected[i].shape || t.dtype != "f32") {
      throw format_error("tensor '" + t.name + "' does not match the model manifest",
                         h.payload_offset + t.offset);
    }
    numerics::TensorF value(t.shape);
    get_words<float>(bytes, h.payload_offset + t.offset, value.data());
    ckpt.params.add(t.name, std::move(value));
  }
  return ckpt;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path);
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw InputError("write failed: " + path);
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  write_file(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

std::vector<std::uint8_t> serialize_token_grid(const TokenGrid& grid) {
  if (grid.size() != grid.h * grid.w) throw ShapeError("token grid size disagrees with its shape");
  nlohmann::ordered_json header;
  header["kind"] = "tokens";
  Blob b{"indices", {grid.h, grid.w}, "i32", {}};
  put_words<TokenId>(b.bytes, grid.indices);
  return assemble(std::move(header), {b});
}

TokenGrid deserialize_token_grid(std::span<const std::uint8_t> bytes) {
  const CheckpointHeader h = parse_header(bytes);
  check_manifest(h, bytes.size());
  if (h.kind != "tokens") throw format_error("not a token-grid container", kPreamble);
  if (h.tensors.size() != 1 || h.tensors[0].name != "indices" || h.tensors[0].dtype != "i32" ||
      h.tensors[0].shape.size() != 2) {
    throw format_error("token container must hold one i32 [h, w] tensor 'indices'", kPreamble);
  }
  TokenGrid g;
  g.h = h.tensors[0].shape[0];
  g.w = h.tensors[0].shape[1];
  g.indices.resize(g.h * g.w);
  get_words<TokenId>(bytes, h.payload_offset, g.indices);
  return g;
}

void save_token_grid(const TokenGrid& grid, const std::string& path) {
  write_file(path, serialize_token_grid(grid));
}

TokenGrid load_token_grid(const std::string& path) { return deserialize_token_grid(read_file(path)); }

}  // namespace maskgil::training
