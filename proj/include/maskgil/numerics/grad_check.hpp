#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "maskgil/numerics/autograd.hpp"

namespace maskgil::numerics {

inline constexpr double kGradCheckStep = 1e-5;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
};

// Builds a scalar loss on the given tape from leaves bound to `params`.
using LossBuilder = std::function<Var(Tape<double>&, std::span<const Var> params)>;

// Compares tape gradients with central differences over every coordinate
// of every parameter. Relative error is |analytic - numeric| / max(1, |numeric|).
GradCheckReport grad_check(const LossBuilder& build, std::vector<TensorD>& params,
                           double eps = kGradCheckStep);

// Scalar-function form for quick checks: f and its derivative df.
double grad_check_scalar(const std::function<double(double)>& f,
                         const std::function<double(double)>& df, double x,
                         double eps = kGradCheckStep);

}  // namespace maskgil::numerics
