#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "maskgil/errors.hpp"

namespace maskgil::numerics {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major tensor. T is float for training/inference and double for
// gradient checking.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    cache_dims();
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
      throw ShapeError("tensor shape " + shape_string(shape_) + " does not match " +
                       std::to_string(data_.size()) + " values");
    }
    cache_dims();
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<T> data) {
    return Tensor({rows, cols}, std::move(data));
  }
  static Tensor vector(std::vector<T> data) {
    const std::size_t n = data.size();
    return Tensor({n}, std::move(data));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  // Rank-2 views; a rank-1 tensor is treated as a single row.
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<T> row(std::size_t r) { return std::span<T>(data_).subspan(r * cols(), cols()); }
  std::span<const T> row(std::size_t r) const {
    return std::span<const T>(data_).subspan(r * cols(), cols());
  }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  void cache_dims() {
    rows_ = shape_.size() >= 2 ? shape_[0] : 1;
    cols_ = 1;
    for (std::size_t i = shape_.size() >= 2 ? 1 : 0; i < shape_.size(); ++i) cols_ *= shape_[i];
  }

  Shape shape_;
  std::vector<T> data_;
  std::size_t rows_ = 1;
  std::size_t cols_ = 1;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <class To, class From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  std::vector<To> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<To>(t[i]);
  return Tensor<To>(t.shape(), std::move(out));
}

template <class T>
bool all_finite(std::span<const T> values) {
  for (T v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <class T>
void require_finite(const Tensor<T>& t, const char* where) {
  if (!all_finite(t.data())) {
    throw NumericError(std::string("non-finite value produced by ") + where);
  }
}

}  // namespace maskgil::numerics
