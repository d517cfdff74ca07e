#include "maskgil/model/model.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <utility>

#include "maskgil/numerics/kernels.hpp"

namespace maskgil::model {

namespace ops = numerics::ops;

// ---- manifest -------------------------------------------------------------

std::string layer_param(std::size_t layer, std::string_view leaf) {
  return "layers." + std::to_string(layer) + "." + std::string(leaf);
}

std::vector<ParamSpec> manifest(const ModelConfig& c) {
  const std::size_t d = c.hidden;
  const std::size_t f = c.ffn_hidden();
  const std::size_t k = c.codebook_size;
  std::vector<ParamSpec> m;
  m.push_back({"tok_embed", {k + 1, d}});
  if (c.condition == ConditionKind::class_label) {
    // Last row is the learned null (unconditional) embedding.
    m.push_back({"cond_embed", {c.num_classes + 1, d}});
  } else {
    m.push_back({"text_proj", {c.text_dim, d}});
    m.push_back({"text_null", {c.condition_slots, d}});
  }
  for (std::size_t l = 0; l < c.layers; ++l) {
    m.push_back({layer_param(l, "attn_norm"), {d}});
    m.push_back({layer_param(l, "wq"), {d, d}});
    m.push_back({layer_param(l, "wk"), {d, d}});
    m.push_back({layer_param(l, "wv"), {d, d}});
    m.push_back({layer_param(l, "wo"), {d, d}});
    if (c.qk_norm) {
      m.push_back({layer_param(l, "q_norm"), {d}});
      m.push_back({layer_param(l, "k_norm"), {d}});
    }
    if (c.post_norm) m.push_back({layer_param(l, "attn_post_norm"), {d}});
    m.push_back({layer_param(l, "mlp_norm"), {d}});
    m.push_back({layer_param(l, "w1"), {d, f}});
    m.push_back({layer_param(l, "w3"), {d, f}});
    m.push_back({layer_param(l, "w2"), {f, d}});
    if (c.post_norm) m.push_back({layer_param(l, "mlp_post_norm"), {d}});
  }
  m.push_back({"final_norm", {d}});
  m.push_back({"head", {d, k}});
  return m;
}

std::uint64_t param_count(const ModelConfig& config) {
  std::uint64_t total = 0;
  for (const ParamSpec& s : manifest(config)) total += numerics::shape_size(s.shape);
  return total;
}

// ---- Parameters -------------------------------------------------------------

template <class T>
void Parameters<T>::add(std::string name, Tensor<T> value) {
  if (index_.count(name)) throw ContractError("duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), std::move(value)});
}

template <class T>
std::size_t Parameters<T>::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("missing parameter '" + std::string(name) + "'");
  return it->second;
}

template <class T>
const Tensor<T>& Parameters<T>::at(std::string_view name) const {
  return entries_[index_of(name)].value;
}

template <class T>
Tensor<T>& Parameters<T>::at(std::string_view name) {
  return entries_[index_of(name)].value;
}

template <class T>
std::uint64_t Parameters<T>::scalar_count() const {
  std::uint64_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

template class Parameters<float>;
template class Parameters<double>;

namespace {

bool is_gain(const std::string& name) {
  return name.size() >= 4 && name.compare(name.size() - 4, 4, "norm") == 0;
}

}  // namespace

ParametersF build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ParametersF params;
  for (ParamSpec& spec : manifest(config)) {
    Tensor<float> t(spec.shape, is_gain(spec.name) ? 1.0f : 0.0f);
    if (!is_gain(spec.name)) {
      for (float& x : t.storage()) {
        double z;
        do {
          z = normal(rng);
        } while (std::abs(z) > 2.0);
        x = static_cast<float>(z * config.init_std);
      }
    }
    params.add(std::move(spec.name), std::move(t));
  }
  return params;
}

template <class T>
BoundParameters<T>::BoundParameters(Tape<T>& tape, const Parameters<T>& params)
    : params_(&params) {
  vars_.reserve(params.size());
  for (const auto& e : params.entries()) vars_.push_back(tape.parameter(e.value));
}

template <class T>
BoundParameters<T>::BoundParameters(const Parameters<T>& params, std::span<const Var> vars)
    : params_(&params), vars_(vars.begin(), vars.end()) {
  if (vars_.size() != params.size()) {
    throw ContractError("BoundParameters: " + std::to_string(vars_.size()) + " leaves for " +
                        std::to_string(params.size()) + " parameters");
  }
}

template class BoundParameters<float>;
template class BoundParameters<double>;

// ---- condition prefill -----------------------------------------------------

Tensor<float> text_stub_features(std::string_view text, const ModelConfig& config) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  Tensor<float> out({config.condition_slots, config.text_dim});
  for (std::size_t i = 0; i < out.size(); ++i) {
    // splitmix64 finaliser over (hash, slot index)
    std::uint64_t z = h + 0x9E3779B97F4A7C15ull * (i + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z ^= z >> 31;
    out[i] = static_cast<float>(static_cast<double>(z >> 11) * 0x1.0p-53 * 2.0 - 1.0);
  }
  return out;
}

namespace {

template <class T>
Var condition_rows(Tape<T>& tape, const BoundParameters<T>& p, const ModelConfig& c,
                   const Condition& condition) {
  if (c.condition == ConditionKind::class_label) {
    std::size_t row = c.num_classes;
    if (const auto* label = std::get_if<ClassLabel>(&condition)) {
      if (label->id < 0 || static_cast<std::size_t>(label->id) >= c.num_classes) {
        throw InputError("class id " + std::to_string(label->id) + " outside [0, " +
                         std::to_string(c.num_classes) + ")");
      }
      row = static_cast<std::size_t>(label->id);
    } else if (std::holds_alternative<TextPrompt>(condition)) {
      throw InputError("model is class-conditioned; got a text prompt");
    }
    const std::size_t idx[] = {row};
    return ops::gather_rows(tape, p["cond_embed"], std::span<const std::size_t>(idx));
  }
  if (const auto* prompt = std::get_if<TextPrompt>(&condition)) {
    Var feats = tape.constant(numerics::tensor_cast<T>(text_stub_features(prompt->text, c)));
    return ops::matmul(tape, feats, p["text_proj"]);
  }
  if (std::holds_alternative<ClassLabel>(condition)) {
    throw InputError("model is text-conditioned; got a class id");
  }
  return p["text_null"];
}

template <class T>
Var attention_sublayer(Tape<T>& tape, const BoundParameters<T>& p, const ModelConfig& c,
                       std::size_t layer, Var normed, const Tensor<T>& cos_t,
                       const Tensor<T>& sin_t, std::size_t seq_len, bool causal) {
  const T eps = static_cast<T>(c.norm_eps);
  Var q = ops::matmul(tape, normed, p[layer_param(layer, "wq")]);
  Var k = ops::matmul(tape, normed, p[layer_param(layer, "wk")]);
  Var v = ops::matmul(tape, normed, p[layer_param(layer, "wv")]);
  if (c.qk_norm) {
    q = ops::rms_norm(tape, q, p[layer_param(layer, "q_norm")], c.heads, eps);
    k = ops::rms_norm(tape, k, p[layer_param(layer, "k_norm")], c.heads, eps);
  }
  q = ops::rotary(tape, q, cos_t, sin_t);
  k = ops::rotary(tape, k, cos_t, sin_t);
  Var a = ops::attention(tape, q, k, v, seq_len, c.heads, causal);
  return ops::matmul(tape, a, p[layer_param(layer, "wo")]);
}

template <class T>
Var mlp_sublayer(Tape<T>& tape, const BoundParameters<T>& p, std::size_t layer, Var normed) {
  Var gate = ops::silu(tape, ops::matmul(tape, normed, p[layer_param(layer, "w1")]));
  Var up = ops::matmul(tape, normed, p[layer_param(layer, "w3")]);
  return ops::matmul(tape, ops::mul(tape, gate, up), p[layer_param(layer, "w2")]);
}

template <class T>
Var block_graph(Tape<T>& tape, const BoundParameters<T>& p, const ModelConfig& c,
                std::size_t layer, Var x, const Tensor<T>& cos_t, const Tensor<T>& sin_t,
                std::size_t seq_len, bool causal, bool post_norm) {
  const T eps = static_cast<T>(c.norm_eps);
  Var n1 = ops::rms_norm(tape, x, p[layer_param(layer, "attn_norm")], 1, eps);
  Var a = attention_sublayer(tape, p, c, layer, n1, cos_t, sin_t, seq_len, causal);
  if (post_norm) a = ops::rms_norm(tape, a, p[layer_param(layer, "attn_post_norm")], 1, eps);
  Var y = ops::add(tape, x, a);
  Var n2 = ops::rms_norm(tape, y, p[layer_param(layer, "mlp_norm")], 1, eps);
  Var m = mlp_sublayer(tape, p, layer, n2);
  if (post_norm) m = ops::rms_norm(tape, m, p[layer_param(layer, "mlp_post_norm")], 1, eps);
  return ops::add(tape, y, m);
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> rope_tables(const ModelConfig& c, std::span<const Coord> coords) {
  const std::size_t half = c.hidden / 2;
  Tensor<T> cos_t({coords.size(), half});
  Tensor<T> sin_t({coords.size(), half});
  for (std::size_t r = 0; r < coords.size(); ++r) {
    rope_row_tables<T>(coords[r], c.heads, c.head_dim(), c.rope_base, cos_t.row(r),
                       sin_t.row(r));
  }
  return {std::move(cos_t), std::move(sin_t)};
}

}  // namespace

void validate_sequence(const ModelConfig& c, const SequenceInput& seq) {
  const std::size_t n = c.grid_tokens();
  if (seq.tokens.size() != n || seq.coords.size() != n) {
    throw InputError("sequence carries " + std::to_string(seq.tokens.size()) + " tokens and " +
                     std::to_string(seq.coords.size()) + " coords; grid needs " +
                     std::to_string(n));
  }
  std::vector<bool> seen(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const TokenId t = seq.tokens[i];
    if (t < 0 || t > c.mask_token_id()) {
      throw InputError("token " + std::to_string(t) + " outside [0, " +
                       std::to_string(c.mask_token_id()) + "]");
    }
    const Coord co = seq.coords[i];
    if (co.row < 0 || co.col < 0 || static_cast<std::size_t>(co.row) >= c.grid_h ||
        static_cast<std::size_t>(co.col) >= c.grid_w) {
      throw InputError("coordinate (" + std::to_string(co.row) + ", " + std::to_string(co.col) +
                       ") outside the grid");
    }
    const std::size_t flat = static_cast<std::size_t>(co.row) * c.grid_w + co.col;
    if (seen[flat]) throw InputError("duplicate grid coordinate in sequence");
    seen[flat] = true;
  }
}

template <class T>
GraphOutputs forward_graph(Tape<T>& tape, const BoundParameters<T>& p, const ModelConfig& c,
                           std::span<const SequenceInput> batch, AttentionMode mode) {
  if (batch.empty()) throw InputError("forward: empty batch");
  const std::size_t n = c.grid_tokens();
  const std::size_t slots = c.condition_slots;
  const std::size_t seq_len = slots + n;
  const std::size_t b = batch.size();

  const bool causal = mode == AttentionMode::causal;

  // Causal sequences keep storage order. Bidirectional ones are laid out by
  // grid position so that attention sums run in a fixed key order and the
  // output is bit-exactly equivariant to the storage order.
  // layout[s * n + k] is the storage index placed at grid row k.
  std::vector<std::size_t> layout(b * n);
  std::vector<Var> parts;
  parts.reserve(b + 1);
  std::vector<std::size_t> tokens;
  tokens.reserve(b * n);
  std::vector<Coord> coords;
  coords.reserve(b * seq_len);
  for (std::size_t s = 0; s < b; ++s) {
    const SequenceInput& seq = batch[s];
    validate_sequence(c, seq);
    const auto lay = std::span<std::size_t>(layout).subspan(s * n, n);
    std::iota(lay.begin(), lay.end(), std::size_t{0});
    if (!causal) {
      for (std::size_t i = 0; i < n; ++i) {
        lay[static_cast<std::size_t>(seq.coords[i].row) * c.grid_w + seq.coords[i].col] = i;
      }
    }
    parts.push_back(condition_rows(tape, p, c, seq.condition));
    for (TokenId t : seq.tokens) tokens.push_back(static_cast<std::size_t>(t));
    coords.insert(coords.end(), slots, Coord::sentinel());
    for (std::size_t i : lay) coords.push_back(seq.coords[i]);
  }
  parts.push_back(ops::gather_rows(tape, p["tok_embed"], std::span<const std::size_t>(tokens)));

  std::vector<std::size_t> order;
  order.reserve(b * seq_len);
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t j = 0; j < slots; ++j) order.push_back(s * slots + j);
    for (std::size_t k = 0; k < n; ++k) order.push_back(b * slots + s * n + layout[s * n + k]);
  }
  Var x = ops::select_rows(tape, ops::concat_rows(tape, std::span<const Var>(parts)),
                           std::span<const std::size_t>(order));

  auto [cos_t, sin_t] = rope_tables<T>(c, coords);
  for (std::size_t l = 0; l < c.layers; ++l) {
    x = block_graph(tape, p, c, l, x, cos_t, sin_t, seq_len, causal, c.post_norm);
  }

  // Logits come back in storage order.
  std::vector<std::size_t> out_rows(b * n);
  for (std::size_t s = 0; s < b; ++s) {
    const std::size_t first = s * seq_len + (causal ? slots - 1 : slots);
    for (std::size_t k = 0; k < n; ++k) out_rows[s * n + layout[s * n + k]] = first + k;
  }
  Var picked = ops::select_rows(tape, x, std::span<const std::size_t>(out_rows));
  Var normed = ops::rms_norm(tape, picked, p["final_norm"], 1, static_cast<T>(c.norm_eps));
  Var logits = ops::matmul(tape, normed, p["head"]);
  return GraphOutputs{logits, x};
}

template <class T>
Tensor<T> forward(const Parameters<T>& params, const ModelConfig& config,
                  std::span<const TokenId> tokens, std::span<const Coord> coords,
                  const Condition& condition, AttentionMode mode) {
  Tape<T> tape(false);
  BoundParameters<T> bound(tape, params);
  SequenceInput seq{std::vector<TokenId>(tokens.begin(), tokens.end()),
                    std::vector<Coord>(coords.begin(), coords.end()), condition};
  GraphOutputs out = forward_graph(tape, bound, config, std::span<const SequenceInput>(&seq, 1), mode);
  return tape.value(out.logits);
}

template <class T>
QKV<T> qk_project(const Parameters<T>& params, const ModelConfig& config, std::size_t layer,
                  const Tensor<T>& x, bool qk_norm) {
  if (layer >= config.layers) throw InputError("qk_project: layer out of range");
  Tape<T> tape(false);
  BoundParameters<T> p(tape, params);
  Var xv = tape.constant(x);
  const T eps = static_cast<T>(config.norm_eps);
  Var q = ops::matmul(tape, xv, p[layer_param(layer, "wq")]);
  Var k = ops::matmul(tape, xv, p[layer_param(layer, "wk")]);
  Var v = ops::matmul(tape, xv, p[layer_param(layer, "wv")]);
  if (qk_norm) {
    q = ops::rms_norm(tape, q, p[layer_param(layer, "q_norm")], config.heads, eps);
    k = ops::rms_norm(tape, k, p[layer_param(layer, "k_norm")], config.heads, eps);
  }
  return QKV<T>{tape.value(q), tape.value(k), tape.value(v)};
}

template <class T>
Tensor<T> block_apply(const Parameters<T>& params, const ModelConfig& config, std::size_t layer,
                      const Tensor<T>& x, std::span<const Coord> coords, AttentionMode mode,
                      bool post_norm) {
  if (layer >= config.layers) throw InputError("block_apply: layer out of range");
  if (x.rows() != coords.size() || x.cols() != config.hidden) {
    throw ShapeError("block_apply: input " + numerics::shape_string(x.shape()) +
                     " does not match coords/hidden");
  }
  Tape<T> tape(false);
  BoundParameters<T> p(tape, params);
  auto [cos_t, sin_t] = rope_tables<T>(config, coords);
  Var out = block_graph(tape, p, config, layer, tape.constant(x), cos_t, sin_t, x.rows(),
                        mode == AttentionMode::causal, post_norm);
  return tape.value(out);
}

template <class T>
Tensor<T> prefill_condition(const Parameters<T>& params, const ModelConfig& config,
                            const Condition& condition) {
  Tape<T> tape(false);
  BoundParameters<T> p(tape, params);
  return tape.value(condition_rows(tape, p, config, condition));
}

#define MASKGIL_INSTANTIATE_MODEL(T)                                                         \
  template GraphOutputs forward_graph<T>(Tape<T>&, const BoundParameters<T>&,               \
                                         const ModelConfig&, std::span<const SequenceInput>, \
                                         AttentionMode);                                     \
  template Tensor<T> forward<T>(const Parameters<T>&, const ModelConfig&,                   \
                                std::span<const TokenId>, std::span<const Coord>,            \
                                const Condition&, AttentionMode);                            \
  template QKV<T> qk_project<T>(const Parameters<T>&, const ModelConfig&, std::size_t,      \
                                const Tensor<T>&, bool);                                     \
  template Tensor<T> block_apply<T>(const Parameters<T>&, const ModelConfig&, std::size_t,  \
                                    const Tensor<T>&, std::span<const Coord>, AttentionMode, \
                                    bool);                                                   \
  template Tensor<T> prefill_condition<T>(const Parameters<T>&, const ModelConfig&,         \
                                          const Condition&);

MASKGIL_INSTANTIATE_MODEL(float)
MASKGIL_INSTANTIATE_MODEL(double)

#undef MASKGIL_INSTANTIATE_MODEL

}  // namespace maskgil::model
