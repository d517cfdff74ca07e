#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "maskgil/model/config.hpp"
#include "maskgil/numerics/autograd.hpp"
#include "maskgil/numerics/tensor.hpp"
#include "maskgil/types.hpp"

namespace maskgil::model {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

struct ParamSpec {
  std::string name;
  numerics::Shape shape;
};

// Names and shapes of every parameter, in storage order. Pure function of
// the config; nothing is allocated beyond the list itself.
std::vector<ParamSpec> manifest(const ModelConfig& config);
std::uint64_t param_count(const ModelConfig& config);

std::string layer_param(std::size_t layer, std::string_view leaf);

template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T> value;
};

template <class T>
class Parameters {
 public:
  void add(std::string name, Tensor<T> value);

  const Tensor<T>& at(std::string_view name) const;
  Tensor<T>& at(std::string_view name);
  bool contains(std::string_view name) const { return index_.count(std::string(name)) != 0; }
  std::size_t index_of(std::string_view name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  std::uint64_t scalar_count() const;
  const std::vector<NamedTensor<T>>& entries() const noexcept { return entries_; }
  std::vector<NamedTensor<T>>& entries() noexcept { return entries_; }

  template <class U>
  Parameters<U> cast() const {
    Parameters<U> out;
    for (const auto& e : entries_) out.add(e.name, numerics::tensor_cast<U>(e.value));
    return out;
  }

  bool operator==(const Parameters& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name != other.entries_[i].name ||
          !(entries_[i].value == other.entries_[i].value))
        return false;
    }
    return true;
  }

 private:
  std::vector<NamedTensor<T>> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

using ParametersF = Parameters<float>;

// Truncated-normal (+-2 std) init with the config's init_std for every
// matrix, unit gains for every norm. Deterministic in seed.
ParametersF build_model(const ModelConfig& config, std::uint64_t seed);

// Parameters bound as leaves on one tape, addressable by name.
template <class T>
class BoundParameters {
 public:
  BoundParameters(Tape<T>& tape, const Parameters<T>& params);
  // Wraps leaves already on a tape, one per entry of `params`, in order.
  BoundParameters(const Parameters<T>& params, std::span<const Var> vars);
  Var operator[](std::string_view name) const { return vars_[params_->index_of(name)]; }
  std::span<const Var> vars() const { return vars_; }

 private:
  const Parameters<T>* params_;
  std::vector<Var> vars_;
};

// ---- rotary position embedding ------------------------------------------

// Rotates the first half of a head vector by row * theta_j and the second
// half by col * theta_j, theta_j = base^(-2j / (d/2)). Sentinel -> identity.
template <class T>
std::vector<T> rope_2d(std::span<const T> vec, Coord coord, double base);

// cos/sin tables for one sequence row covering all heads: `heads * head_dim / 2`
// entries each.
template <class T>
void rope_row_tables(Coord coord, std::size_t heads, std::size_t head_dim, double base,
                     std::span<T> cos_out, std::span<T> sin_out);

// ---- forward ------------------------------------------------------------

// One sequence: grid tokens (mask_token_id for unknown positions) with their
// coordinates in storage order, behind the condition prefill.
struct SequenceInput {
  std::vector<TokenId> tokens;
  std::vector<Coord> coords;
  Condition condition;
};

struct GraphOutputs {
  Var logits;        // [batch * grid tokens x K]
  Var final_hidden;  // output of the last block, [batch * sequence length x hidden];
                     // bidirectional grid rows are in raster order
};

void validate_sequence(const ModelConfig& config, const SequenceInput& seq);

// Builds the full network on `tape`. In bidirectional mode logits row i
// predicts the token stored at grid position i; in causal mode it is read
// from the preceding sequence position (next-token prediction), so it only
// depends on tokens stored before i.
template <class T>
GraphOutputs forward_graph(Tape<T>& tape, const BoundParameters<T>& params,
                           const ModelConfig& config, std::span<const SequenceInput> batch,
                           AttentionMode mode);

// Inference convenience: one sequence, returns [N x K] logits.
template <class T>
Tensor<T> forward(const Parameters<T>& params, const ModelConfig& config,
                  std::span<const TokenId> tokens, std::span<const Coord> coords,
                  const Condition& condition, AttentionMode mode);

// ---- building blocks exposed for inspection and tests ---------------------

template <class T>
struct QKV {
  Tensor<T> q, k, v;
};

// x: [rows x hidden] already normalised block input. Applies the q/k/v
// projections and, when qk_norm is set, per-head RMSNorm of q and k.
// Rotary is applied afterwards by the caller (see block_apply).
template <class T>
QKV<T> qk_project(const Parameters<T>& params, const ModelConfig& config, std::size_t layer,
                  const Tensor<T>& x, bool qk_norm);

// One transformer block over a single sequence x: [S x hidden] with coords
// [S] (sentinels for condition slots).
template <class T>
Tensor<T> block_apply(const Parameters<T>& params, const ModelConfig& config, std::size_t layer,
                      const Tensor<T>& x, std::span<const Coord> coords, AttentionMode mode,
                      bool post_norm);

// Deterministic pseudo-embedding for a text prompt: [condition_slots x text_dim]
// values in [-1, 1] derived from a byte hash.
Tensor<float> text_stub_features(std::string_view text, const ModelConfig& config);

// Condition prefill rows [condition_slots x hidden].
template <class T>
Tensor<T> prefill_condition(const Parameters<T>& params, const ModelConfig& config,
                            const Condition& condition);

}  // namespace maskgil::model
