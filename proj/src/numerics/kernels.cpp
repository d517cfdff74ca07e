#include "maskgil/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace maskgil::numerics {

template <class T>
void matmul_row(std::span<const T> a_row, const Tensor<T>& b, std::span<T> out) {
  const std::size_t k = b.rows();
  const std::size_t n = b.cols();
  std::fill(out.begin(), out.end(), T{0});
  const T* bp = b.data().data();
  for (std::size_t l = 0; l < k; ++l) {
    const T a = a_row[l];
    if (a == T{0}) continue;
    const T* brow = bp + l * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += a * brow[j];
  }
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                     shape_string(b.shape()));
  }
  Tensor<T> c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) matmul_row<T>(a.row(i), b, c.row(i));
  return c;
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose: rank-2 tensor required");
  Tensor<T> t({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

template <class T>
void softmax_inplace(std::span<T> v) {
  const T mx = *std::max_element(v.begin(), v.end());
  T sum{0};
  for (T& x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (T& x : v) x /= sum;
}

template <class T>
std::vector<T> softmax(std::span<const T> v, T temperature) {
  if (v.empty()) throw ShapeError("softmax: empty vector");
  if (!(temperature > T{0})) throw InputError("softmax: temperature must be positive");
  std::vector<T> out(v.begin(), v.end());
  if (temperature != T{1}) {
    for (T& x : out) x /= temperature;
  }
  softmax_inplace<T>(out);
  return out;
}

template <class T>
void rms_norm_row(std::span<const T> x, std::span<const T> gain, std::size_t groups, T eps,
                  std::span<T> out) {
  const std::size_t width = x.size() / groups;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = g * width;
    T ss{0};
    for (std::size_t i = 0; i < width; ++i) ss += x[base + i] * x[base + i];
    const T inv = T{1} / std::sqrt(ss / static_cast<T>(width) + eps);
    for (std::size_t i = 0; i < width; ++i) out[base + i] = gain[base + i] * x[base + i] * inv;
  }
}

template <class T>
std::vector<T> rms_norm(std::span<const T> x, std::span<const T> gain, T eps) {
  if (x.empty() || gain.size() != x.size()) {
    throw ShapeError("rms_norm: gain length " + std::to_string(gain.size()) +
                     " does not match input length " + std::to_string(x.size()));
  }
  std::vector<T> out(x.size());
  rms_norm_row<T>(x, gain, 1, eps, out);
  return out;
}

template <class T>
Tensor<T> rms_norm_rows(const Tensor<T>& x, std::span<const T> gain, std::size_t groups, T eps) {
  if (gain.size() != x.cols() || groups == 0 || x.cols() % groups != 0) {
    throw ShapeError("rms_norm_rows: incompatible gain/groups for " + shape_string(x.shape()));
  }
  Tensor<T> y(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) rms_norm_row<T>(x.row(r), gain, groups, eps, y.row(r));
  return y;
}

template <class T>
T silu(T x) {
  return x / (T{1} + std::exp(-x));
}

template <class T>
T dot(std::span<const T> a, std::span<const T> b) {
  T s{0};
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <class T>
T root_mean_square(std::span<const T> x) {
  if (x.empty()) return T{0};
  T ss{0};
  for (T v : x) ss += v * v;
  return std::sqrt(ss / static_cast<T>(x.size()));
}

template <class T>
void rotate_pairs_row(std::span<T> x, std::span<const T> cos_t, std::span<const T> sin_t,
                      bool inverse) {
  for (std::size_t p = 0; p < cos_t.size(); ++p) {
    const T c = cos_t[p];
    const T s = inverse ? -sin_t[p] : sin_t[p];
    const T x0 = x[2 * p];
    const T x1 = x[2 * p + 1];
    x[2 * p] = x0 * c - x1 * s;
    x[2 * p + 1] = x0 * s + x1 * c;
  }
}

template <class T>
void attend_row(std::span<const T> query, const T* keys, const T* values, std::size_t count,
                std::size_t stride, T scale, std::span<T> probs, std::span<T> out) {
  const std::size_t dh = query.size();
  for (std::size_t j = 0; j < count; ++j) {
    const T* k = keys + j * stride;
    T s{0};
    for (std::size_t d = 0; d < dh; ++d) s += query[d] * k[d];
    probs[j] = s * scale;
  }
  softmax_inplace<T>(probs.first(count));
  std::fill(out.begin(), out.end(), T{0});
  for (std::size_t j = 0; j < count; ++j) {
    const T p = probs[j];
    const T* v = values + j * stride;
    for (std::size_t d = 0; d < dh; ++d) out[d] += p * v[d];
  }
}

#define MASKGIL_INSTANTIATE(T)                                                                  \
  template void matmul_row<T>(std::span<const T>, const Tensor<T>&, std::span<T>);             \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                            \
  template Tensor<T> transpose<T>(const Tensor<T>&);                                           \
  template std::vector<T> softmax<T>(std::span<const T>, T);                                   \
  template void softmax_inplace<T>(std::span<T>);                                              \
  template std::vector<T> rms_norm<T>(std::span<const T>, std::span<const T>, T);              \
  template void rms_norm_row<T>(std::span<const T>, std::span<const T>, std::size_t, T,        \
                                std::span<T>);                                                 \
  template Tensor<T> rms_norm_rows<T>(const Tensor<T>&, std::span<const T>, std::size_t, T);   \
  template T silu<T>(T);                                                                       \
  template T dot<T>(std::span<const T>, std::span<const T>);                                   \
  template T root_mean_square<T>(std::span<const T>);                                          \
  template void rotate_pairs_row<T>(std::span<T>, std::span<const T>, std::span<const T>, bool); \
  template void attend_row<T>(std::span<const T>, const T*, const T*, std::size_t, std::size_t, \
                              T, std::span<T>, std::span<T>);

MASKGIL_INSTANTIATE(float)
MASKGIL_INSTANTIATE(double)

#undef MASKGIL_INSTANTIATE

}  // namespace maskgil::numerics
