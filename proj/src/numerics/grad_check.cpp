#include "maskgil/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace maskgil::numerics {
namespace {

double evaluate(const LossBuilder& build, const std::vector<TensorD>& params) {
  Tape<double> tape(false);
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const TensorD& p : params) vars.push_back(tape.parameter(p));
  const Var loss = build(tape, vars);
  const TensorD& v = tape.value(loss);
  if (v.size() != 1) throw ContractError("grad_check: loss is not a scalar");
  if (!std::isfinite(v[0])) throw NumericError("grad_check: non-finite loss evaluation");
  return v[0];
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& build, std::vector<TensorD>& params, double eps) {
  std::vector<TensorD> analytic;
  {
    Tape<double> tape(true);
    std::vector<Var> vars;
    for (const TensorD& p : params) vars.push_back(tape.parameter(p));
    const Var loss = build(tape, vars);
    if (!std::isfinite(tape.value(loss)[0])) throw NumericError("grad_check: non-finite loss");
    tape.backward(loss);
    for (Var v : vars) analytic.push_back(tape.grad(v));
  }

  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].size(); ++i) {
      const double saved = params[p][i];
      params[p][i] = saved + eps;
      const double up = evaluate(build, params);
      params[p][i] = saved - eps;
      const double down = evaluate(build, params);
      params[p][i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = relative_error(analytic[p][i], numeric);
      ++report.coordinates;
      if (err > report.max_rel_error || report.coordinates == 1) {
        report.max_rel_error = err;
        report.worst_param = p;
        report.worst_index = i;
        report.worst_analytic = analytic[p][i];
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

double grad_check_scalar(const std::function<double(double)>& f,
                         const std::function<double(double)>& df, double x, double eps) {
  const double up = f(x + eps);
  const double down = f(x - eps);
  if (!std::isfinite(up) || !std::isfinite(down)) {
    throw NumericError("grad_check: non-finite evaluation at x = " + std::to_string(x));
  }
  return relative_error(df(x), (up - down) / (2.0 * eps));
}

}  // namespace maskgil::numerics
