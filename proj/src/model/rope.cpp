#include <cmath>
#include <string>

#include "maskgil/model/model.hpp"
#include "maskgil/numerics/kernels.hpp"

namespace maskgil::model {

template <class T>
void rope_row_tables(Coord coord, std::size_t heads, std::size_t head_dim, double base,
                     std::span<T> cos_out, std::span<T> sin_out) {
  if (head_dim % 4 != 0) {
    throw ConfigError("rope_2d: head dimension " + std::to_string(head_dim) +
                      " must be divisible by 4");
  }
  const std::size_t pairs_per_head = head_dim / 2;
  const std::size_t pairs_per_axis = head_dim / 4;
  const double half = static_cast<double>(head_dim / 2);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t p = 0; p < pairs_per_head; ++p) {
      const std::size_t slot = h * pairs_per_head + p;
      if (coord.is_sentinel()) {
        cos_out[slot] = T{1};
        sin_out[slot] = T{0};
        continue;
      }
      const bool row_axis = p < pairs_per_axis;
      const std::size_t j = row_axis ? p : p - pairs_per_axis;
      const double theta = std::pow(base, -2.0 * static_cast<double>(j) / half);
      const double position = row_axis ? coord.row : coord.col;
      const double angle = position * theta;
      cos_out[slot] = static_cast<T>(std::cos(angle));
      sin_out[slot] = static_cast<T>(std::sin(angle));
    }
  }
}

template <class T>
std::vector<T> rope_2d(std::span<const T> vec, Coord coord, double base) {
  const std::size_t d = vec.size();
  if (d % 4 != 0) {
    throw ConfigError("rope_2d: vector length " + std::to_string(d) + " must be divisible by 4");
  }
  std::vector<T> cos_t(d / 2), sin_t(d / 2);
  rope_row_tables<T>(coord, 1, d, base, cos_t, sin_t);
  std::vector<T> out(vec.begin(), vec.end());
  numerics::rotate_pairs_row<T>(out, cos_t, sin_t);
  return out;
}

template void rope_row_tables<float>(Coord, std::size_t, std::size_t, double, std::span<float>,
                                     std::span<float>);
template void rope_row_tables<double>(Coord, std::size_t, std::size_t, double, std::span<double>,
                                      std::span<double>);
template std::vector<float> rope_2d<float>(std::span<const float>, Coord, double);
template std::vector<double> rope_2d<double>(std::span<const double>, Coord, double);

}  // namespace maskgil::model
