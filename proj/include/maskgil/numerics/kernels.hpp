#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "maskgil/numerics/tensor.hpp"

// Pure dense kernels. Every whole-tensor kernel is built from the row-level
// helpers below, so a row computed in isolation (incremental decoding) is
// bit-identical to the same row computed inside a full batch.
namespace maskgil::numerics {

inline constexpr double kDefaultNormEps = 1e-5;

// out = a_row * B, with B of shape [k x n].
template <class T>
void matmul_row(std::span<const T> a_row, const Tensor<T>& b, std::span<T> out);

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
Tensor<T> transpose(const Tensor<T>& a);

template <class T>
std::vector<T> softmax(std::span<const T> v, T temperature = T{1});

// In-place softmax over one row with max subtraction.
template <class T>
void softmax_inplace(std::span<T> v);

// y_i = gain_i * x_i / sqrt(mean(x^2) + eps)
template <class T>
std::vector<T> rms_norm(std::span<const T> x, std::span<const T> gain, T eps);

// Normalises each contiguous group of `x.size() / groups` values on its
// own, using the matching slice of `gain`. groups == 1 is plain RMSNorm,
// groups == heads is per-head normalisation.
template <class T>
void rms_norm_row(std::span<const T> x, std::span<const T> gain, std::size_t groups, T eps,
                  std::span<T> out);

template <class T>
Tensor<T> rms_norm_rows(const Tensor<T>& x, std::span<const T> gain, std::size_t groups, T eps);

template <class T>
T silu(T x);

template <class T>
T dot(std::span<const T> a, std::span<const T> b);

template <class T>
T root_mean_square(std::span<const T> x);

// Rotates consecutive pairs (x[2p], x[2p+1]) by the angle whose cosine and
// sine are cos_t[p], sin_t[p]. inverse = true applies the transpose.
template <class T>
void rotate_pairs_row(std::span<T> x, std::span<const T> cos_t, std::span<const T> sin_t,
                      bool inverse = false);

// Single-query attention for one head. keys/values are [count x head_dim]
// sliced at column `offset` of rows with stride `stride`. Writes the
// attention-weighted value into out and the probabilities into probs.
template <class T>
void attend_row(std::span<const T> query, const T* keys, const T* values, std::size_t count,
                std::size_t stride, T scale, std::span<T> probs, std::span<T> out);

}  // namespace maskgil::numerics
