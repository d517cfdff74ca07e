#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "maskgil/numerics/kernels.hpp"
#include "maskgil/numerics/tensor.hpp"

namespace maskgil::numerics {

// Handle to a node recorded on a Tape.
struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const noexcept { return id != std::numeric_limits<std::uint32_t>::max(); }
};

// Reverse-mode tape. Nodes are appended in construction order; backward
// walks them in reverse exactly once. A tape built with record = false only
// evaluates values (inference) and refuses backward().
template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor<T>& out_grad)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  Var constant(Tensor<T> value);
  Var variable(Tensor<T> value);
  // Non-owning leaf; `external` must outlive the tape.
  Var parameter(const Tensor<T>& external);

  const Tensor<T>& value(Var v) const;
  // Gradient accumulated by backward(); a zero tensor if nothing flowed in.
  Tensor<T> grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void backward(Var loss);
  // Number of recorded operations whose adjoint ran in the last backward().
  std::size_t last_backward_visits() const noexcept { return visits_; }

  // Used by the primitive ops below.
  Var record(Tensor<T> value, bool requires_grad, Backward fn, const char* op);
  void accumulate(Var v, const Tensor<T>& g);
  Tensor<T>& grad_buffer(Var v);

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    Backward backward;
    const Tensor<T>& value() const { return external ? *external : owned; }
  };

  bool record_;
  std::vector<Node> nodes_;
  std::size_t visits_ = 0;
};

// Differentiable primitives. All inputs must live on the same tape.
namespace ops {

template <class T>
Var matmul(Tape<T>& tape, Var a, Var b);
template <class T>
Var add(Tape<T>& tape, Var a, Var b);
template <class T>
Var mul(Tape<T>& tape, Var a, Var b);
template <class T>
Var scale(Tape<T>& tape, Var a, T factor);
template <class T>
Var silu(Tape<T>& tape, Var a);
template <class T>
Var sum(Tape<T>& tape, Var a);

// Row-wise RMSNorm; see rms_norm_row for the meaning of groups.
template <class T>
Var rms_norm(Tape<T>& tape, Var x, Var gain, std::size_t groups, T eps);

// Pairwise rotation with per-row tables of shape [rows x cols/2].
template <class T>
Var rotary(Tape<T>& tape, Var x, const Tensor<T>& cos_table, const Tensor<T>& sin_table);

// Multi-head scaled dot-product attention over rows grouped into
// consecutive sequences of length seq_len. causal restricts row i of a
// sequence to rows 0..i of the same sequence.
template <class T>
Var attention(Tape<T>& tape, Var q, Var k, Var v, std::size_t seq_len, std::size_t heads,
              bool causal);

template <class T>
Var gather_rows(Tape<T>& tape, Var table, std::span<const std::size_t> indices);
template <class T>
Var select_rows(Tape<T>& tape, Var x, std::span<const std::size_t> indices);
template <class T>
Var concat_rows(Tape<T>& tape, std::span<const Var> parts);

// Mean over the listed rows of the label-smoothed cross entropy
// -sum_k q_k log softmax(logits)_k with q = (1 - s) onehot + s / K.
template <class T>
Var smoothed_cross_entropy(Tape<T>& tape, Var logits, std::span<const std::size_t> rows,
                           std::span<const std::int32_t> targets, T smoothing);

}  // namespace ops
}  // namespace maskgil::numerics
