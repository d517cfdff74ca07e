#include "maskgil/numerics/autograd.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace maskgil::numerics {

template <class T>
Var Tape<T>::constant(Tensor<T> value) {
  return record(std::move(value), false, nullptr, "constant");
}

template <class T>
Var Tape<T>::variable(Tensor<T> value) {
  return record(std::move(value), record_, nullptr, "variable");
}

template <class T>
Var Tape<T>::parameter(const Tensor<T>& external) {
  require_finite(external, "parameter");
  Node node;
  node.external = &external;
  node.requires_grad = record_;
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class T>
const Tensor<T>& Tape<T>::value(Var v) const {
  return nodes_.at(v.id).value();
}

template <class T>
Tensor<T> Tape<T>::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.size() == 0 && n.value().size() != 0) return Tensor<T>(n.value().shape());
  return n.grad;
}

template <class T>
Tensor<T>& Tape<T>::grad_buffer(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.size() != n.value().size() || n.grad.shape() != n.value().shape()) {
    n.grad = Tensor<T>(n.value().shape());
  }
  return n.grad;
}

template <class T>
void Tape<T>::accumulate(Var v, const Tensor<T>& g) {
  if (!nodes_.at(v.id).requires_grad) return;
  Tensor<T>& buf = grad_buffer(v);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

template <class T>
Var Tape<T>::record(Tensor<T> value, bool requires_grad, Backward fn, const char* op) {
  require_finite(value, op);
  Node node;
  node.owned = std::move(value);
  node.requires_grad = requires_grad && record_;
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <class T>
void Tape<T>::backward(Var loss) {
  if (!record_) throw ContractError("backward: tape was built without gradient recording");
  if (value(loss).size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_string(value(loss).shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor<T>();
  visits_ = 0;
  grad_buffer(loss)[0] = T{1};
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    // Copy: the adjoint may re-enter grad_buffer for other nodes.
    const Tensor<T> g = n.grad;
    n.backward(*this, g);
    ++visits_;
  }
}

namespace ops {
namespace {

template <class T>
bool any_grad(const Tape<T>& tape, std::initializer_list<Var> vars) {
  for (Var v : vars)
    if (tape.requires_grad(v)) return true;
  return false;
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

}  // namespace

template <class T>
Var matmul(Tape<T>& tape, Var a, Var b) {
  Tensor<T> out = numerics::matmul(tape.value(a), tape.value(b));
  return tape.record(
      std::move(out), any_grad(tape, {a, b}),
      [a, b](Tape<T>& t, const Tensor<T>& g) {
        if (t.requires_grad(a)) t.accumulate(a, numerics::matmul(g, transpose(t.value(b))));
        if (t.requires_grad(b)) t.accumulate(b, numerics::matmul(transpose(t.value(a)), g));
      },
      "matmul");
}

template <class T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require_same_shape(av, bv, "add");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return tape.record(
      std::move(out), any_grad(tape, {a, b}),
      [a, b](Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
      },
      "add");
}

template <class T>
Var mul(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require_same_shape(av, bv, "mul");
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return tape.record(
      std::move(out), any_grad(tape, {a, b}),
      [a, b](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& av = t.value(a);
        const Tensor<T>& bv = t.value(b);
        Tensor<T> ga(g.shape()), gb(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] = g[i] * bv[i];
          gb[i] = g[i] * av[i];
        }
        t.accumulate(a, ga);
        t.accumulate(b, gb);
      },
      "mul");
}

template <class T>
Var scale(Tape<T>& tape, Var a, T factor) {
  Tensor<T> out = tape.value(a);
  for (T& x : out.storage()) x *= factor;
  return tape.record(
      std::move(out), tape.requires_grad(a),
      [a, factor](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T> ga = g;
        for (T& x : ga.storage()) x *= factor;
        t.accumulate(a, ga);
      },
      "scale");
}

template <class T>
Var silu(Tape<T>& tape, Var a) {
  const Tensor<T>& av = tape.value(a);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = numerics::silu(av[i]);
  return tape.record(
      std::move(out), tape.requires_grad(a),
      [a](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& av = t.value(a);
        Tensor<T> ga(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) {
          const T s = T{1} / (T{1} + std::exp(-av[i]));
          ga[i] = g[i] * s * (T{1} + av[i] * (T{1} - s));
        }
        t.accumulate(a, ga);
      },
      "silu");
}

template <class T>
Var sum(Tape<T>& tape, Var a) {
  const Tensor<T>& av = tape.value(a);
  T s{0};
  for (T x : av.data()) s += x;
  return tape.record(
      Tensor<T>({1}, std::vector<T>{s}), tape.requires_grad(a),
      [a](Tape<T>& t, const Tensor<T>& g) {
        t.accumulate(a, Tensor<T>(t.value(a).shape(), g[0]));
      },
      "sum");
}

template <class T>
Var rms_norm(Tape<T>& tape, Var x, Var gain, std::size_t groups, T eps) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& gv = tape.value(gain);
  Tensor<T> out = rms_norm_rows(xv, gv.data(), groups, eps);
  return tape.record(
      std::move(out), any_grad(tape, {x, gain}),
      [x, gain, groups, eps](Tape<T>& t, const Tensor<T>& g) {
        const Tensor<T>& xv = t.value(x);
        const Tensor<T>& gv = t.value(gain);
        const std::size_t cols = xv.cols();
        const std::size_t width = cols / groups;
        Tensor<T> gx(xv.shape());
        Tensor<T> gg(gv.shape());
        for (std::size_t r = 0; r < xv.rows(); ++r) {
          for (std::size_t grp = 0; grp < groups; ++grp) {
            const std::size_t base = r * cols + grp * width;
            T ss{0};
            for (std::size_t i = 0; i < width; ++i) ss += xv[base + i] * xv[base + i];
            const T inv = T{1} / std::sqrt(ss / static_cast<T>(width) + eps);
            // dy_i/dx_j = gain_i * inv * (delta_ij - x_i x_j inv^2 / width)
            T proj{0};
            for (std::size_t i = 0; i < width; ++i) {
              const std::size_t c = grp * width + i;
              proj += g[base + i] * gv[c] * xv[base + i];
              gg[c] += g[base + i] * xv[base + i] * inv;
            }
            const T coef = proj * inv * inv * inv / static_cast<T>(width);
            for (std::size_t i = 0; i < width; ++i) {
              const std::size_t c = grp * width + i;
              gx[base + i] = g[base + i] * gv[c] * inv - xv[base + i] * coef;
            }
          }
        }
        t.accumulate(x, gx);
        t.accumulate(gain, gg);
      },
      "rms_norm");
}

template <class T>
Var rotary(Tape<T>& tape, Var x, const Tensor<T>& cos_table, const Tensor<T>& sin_table) {
  Tensor<T> out = tape.value(x);
  if (cos_table.rows() != out.rows() || cos_table.cols() * 2 != out.cols() ||
      sin_table.shape() != cos_table.shape()) {
    throw ShapeError("rotary: table shape " + shape_string(cos_table.shape()) +
                     " incompatible with " + shape_string(out.shape()));
  }
  for (std::size_t r = 0; r < out.rows(); ++r)
    rotate_pairs_row<T>(out.row(r), cos_table.row(r), sin_table.row(r));
  return tape.record(
      std::move(out), tape.requires_grad(x),
      [x, cos_table, sin_table](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T> gx = g;
        for (std::size_t r = 0; r < gx.rows(); ++r)
          rotate_pairs_row<T>(gx.row(r), cos_table.row(r), sin_table.row(r), true);
        t.accumulate(x, gx);
      },
      "rotary");
}

template <class T>
Var attention(Tape<T>& tape, Var q, Var k, Var v, std::size_t seq_len, std::size_t heads,
              bool causal) {
  const Tensor<T>& qv = tape.value(q);
  const Tensor<T>& kv = tape.value(k);
  const Tensor<T>& vv = tape.value(v);
  require_same_shape(qv, kv, "attention");
  require_same_shape(qv, vv, "attention");
  const std::size_t rows = qv.rows();
  const std::size_t width = qv.cols();
  if (seq_len == 0 || rows % seq_len != 0 || heads == 0 || width % heads != 0) {
    throw ShapeError("attention: rows " + std::to_string(rows) + " not divisible into sequences of " +
                     std::to_string(seq_len) + " or width not divisible by heads");
  }
  const std::size_t dh = width / heads;
  const T scale = T{1} / std::sqrt(static_cast<T>(dh));
  // probs[(row * heads + h) * seq_len + j]
  std::vector<T> probs(rows * heads * seq_len, T{0});
  Tensor<T> out({rows, width});
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t start = (r / seq_len) * seq_len;
    const std::size_t count = causal ? (r - start + 1) : seq_len;
    for (std::size_t h = 0; h < heads; ++h) {
      std::span<T> p(probs.data() + (r * heads + h) * seq_len, seq_len);
      attend_row<T>(qv.row(r).subspan(h * dh, dh), kv.data().data() + start * width + h * dh,
                    vv.data().data() + start * width + h * dh, count, width, scale, p,
                    out.row(r).subspan(h * dh, dh));
    }
  }
  return tape.record(
      std::move(out), any_grad(tape, {q, k, v}),
      [q, k, v, seq_len, heads, causal, scale, probs = std::move(probs)](Tape<T>& t,
                                                                         const Tensor<T>& g) {
        const Tensor<T>& qv = t.value(q);
        const Tensor<T>& kv = t.value(k);
        const Tensor<T>& vv = t.value(v);
        const std::size_t rows = qv.rows();
        const std::size_t width = qv.cols();
        const std::size_t dh = width / heads;
        Tensor<T> gq(qv.shape()), gk(kv.shape()), gv(vv.shape());
        std::vector<T> dp(seq_len);
        for (std::size_t r = 0; r < rows; ++r) {
          const std::size_t start = (r / seq_len) * seq_len;
          const std::size_t count = causal ? (r - start + 1) : seq_len;
          for (std::size_t h = 0; h < heads; ++h) {
            const T* p = probs.data() + (r * heads + h) * seq_len;
            const std::size_t off = h * dh;
            T weighted{0};
            for (std::size_t j = 0; j < count; ++j) {
              const std::size_t kr = start + j;
              T d{0};
              for (std::size_t e = 0; e < dh; ++e) {
                d += g(r, off + e) * vv(kr, off + e);
                gv(kr, off + e) += p[j] * g(r, off + e);
              }
              dp[j] = d;
              weighted += p[j] * d;
            }
            for (std::size_t j = 0; j < count; ++j) {
              const std::size_t kr = start + j;
              const T ds = p[j] * (dp[j] - weighted) * scale;
              for (std::size_t e = 0; e < dh; ++e) {
                gq(r, off + e) += ds * kv(kr, off + e);
                gk(kr, off + e) += ds * qv(r, off + e);
              }
            }
          }
        }
        t.accumulate(q, gq);
        t.accumulate(k, gk);
        t.accumulate(v, gv);
      },
      "attention");
}

template <class T>
Var gather_rows(Tape<T>& tape, Var table, std::span<const std::size_t> indices) {
  const Tensor<T>& tv = tape.value(table);
  const std::size_t cols = tv.cols();
  Tensor<T> out({indices.size(), cols});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= tv.rows()) {
      throw InputError("gather_rows: index " + std::to_string(indices[i]) + " out of range " +
                       std::to_string(tv.rows()));
    }
    auto src = tv.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return tape.record(
      std::move(out), tape.requires_grad(table),
      [table, idx = std::vector<std::size_t>(indices.begin(), indices.end())](Tape<T>& t,
                                                                              const Tensor<T>& g) {
        Tensor<T>& buf = t.grad_buffer(table);
        const std::size_t cols = buf.cols();
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t c = 0; c < cols; ++c) buf(idx[i], c) += g(i, c);
      },
      "gather_rows");
}

template <class T>
Var select_rows(Tape<T>& tape, Var x, std::span<const std::size_t> indices) {
  return gather_rows(tape, x, indices);
}

template <class T>
Var concat_rows(Tape<T>& tape, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t cols = tape.value(parts[0]).cols();
  std::size_t rows = 0;
  bool needs_grad = false;
  for (Var p : parts) {
    if (tape.value(p).cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += tape.value(p).rows();
    needs_grad = needs_grad || tape.requires_grad(p);
  }
  Tensor<T> out({rows, cols});
  std::size_t at = 0;
  for (Var p : parts) {
    const Tensor<T>& pv = tape.value(p);
    std::copy(pv.data().begin(), pv.data().end(), out.data().begin() + at * cols);
    at += pv.rows();
  }
  return tape.record(
      std::move(out), needs_grad,
      [ps = std::vector<Var>(parts.begin(), parts.end())](Tape<T>& t, const Tensor<T>& g) {
        std::size_t at = 0;
        const std::size_t cols = g.cols();
        for (Var p : ps) {
          const std::size_t r = t.value(p).rows();
          if (t.requires_grad(p)) {
            Tensor<T> gp(t.value(p).shape());
            std::copy(g.data().begin() + at * cols, g.data().begin() + (at + r) * cols,
                      gp.data().begin());
            t.accumulate(p, gp);
          }
          at += r;
        }
      },
      "concat_rows");
}

template <class T>
Var smoothed_cross_entropy(Tape<T>& tape, Var logits, std::span<const std::size_t> rows,
                           std::span<const std::int32_t> targets, T smoothing) {
  if (rows.empty()) throw ContractError("cross entropy: no rows selected");
  if (rows.size() != targets.size()) throw ShapeError("cross entropy: rows/targets mismatch");
  const Tensor<T>& lv = tape.value(logits);
  const std::size_t classes = lv.cols();
  const T offpeak = smoothing / static_cast<T>(classes);
  Tensor<T> probs({rows.size(), classes});
  T total{0};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= lv.rows()) throw ShapeError("cross entropy: row out of range");
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= classes) {
      throw InputError("cross entropy: target out of range");
    }
    auto src = lv.row(rows[i]);
    const T mx = *std::max_element(src.begin(), src.end());
    T z{0};
    for (T x : src) z += std::exp(x - mx);
    const T log_z = mx + std::log(z);
    T loss{0};
    for (std::size_t c = 0; c < classes; ++c) {
      const T logp = src[c] - log_z;
      const T qc = offpeak + (static_cast<std::int32_t>(c) == targets[i] ? T{1} - smoothing : T{0});
      loss -= qc * logp;
      probs(i, c) = std::exp(logp);
    }
    total += loss;
  }
  const T count = static_cast<T>(rows.size());
  return tape.record(
      Tensor<T>({1}, std::vector<T>{total / count}), tape.requires_grad(logits),
      [logits, probs = std::move(probs), r = std::vector<std::size_t>(rows.begin(), rows.end()),
       tg = std::vector<std::int32_t>(targets.begin(), targets.end()), offpeak, smoothing,
       count](Tape<T>& t, const Tensor<T>& g) {
        Tensor<T>& buf = t.grad_buffer(logits);
        const std::size_t classes = probs.cols();
        const T s = g[0] / count;
        for (std::size_t i = 0; i < r.size(); ++i) {
          for (std::size_t c = 0; c < classes; ++c) {
            const T qc =
                offpeak + (static_cast<std::int32_t>(c) == tg[i] ? T{1} - smoothing : T{0});
            buf(r[i], c) += s * (probs(i, c) - qc);
          }
        }
      },
      "cross_entropy");
}

#define MASKGIL_INSTANTIATE_OPS(T)                                                             \
  template Var matmul<T>(Tape<T>&, Var, Var);                                                 \
  template Var add<T>(Tape<T>&, Var, Var);                                                    \
  template Var mul<T>(Tape<T>&, Var, Var);                                                    \
  template Var scale<T>(Tape<T>&, Var, T);                                                    \
  template Var silu<T>(Tape<T>&, Var);                                                        \
  template Var sum<T>(Tape<T>&, Var);                                                         \
  template Var rms_norm<T>(Tape<T>&, Var, Var, std::size_t, T);                               \
  template Var rotary<T>(Tape<T>&, Var, const Tensor<T>&, const Tensor<T>&);                  \
  template Var attention<T>(Tape<T>&, Var, Var, Var, std::size_t, std::size_t, bool);         \
  template Var gather_rows<T>(Tape<T>&, Var, std::span<const std::size_t>);                   \
  template Var select_rows<T>(Tape<T>&, Var, std::span<const std::size_t>);                   \
  template Var concat_rows<T>(Tape<T>&, std::span<const Var>);                                \
  template Var smoothed_cross_entropy<T>(Tape<T>&, Var, std::span<const std::size_t>,         \
                                         std::span<const std::int32_t>, T);

MASKGIL_INSTANTIATE_OPS(float)
MASKGIL_INSTANTIATE_OPS(double)

#undef MASKGIL_INSTANTIATE_OPS

}  // namespace ops

template class Tape<float>;
template class Tape<double>;

}  // namespace maskgil::numerics
