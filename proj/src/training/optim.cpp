#include "maskgil/training/optim.hpp"

#include <cmath>
#include <string>

#include "maskgil/errors.hpp"

namespace maskgil::training {

void adamw_update(std::span<float> p, std::span<const float> g, std::span<double> m,
                  std::span<double> v, std::size_t t, const TrainConfig& c) {
  if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
    throw ContractError("adamw_update: buffer sizes disagree");
  }
  if (t == 0) throw ContractError("adamw_update: step count starts at 1");
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  const double decay = 1.0 - c.lr * c.weight_decay;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double gi = g[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    double x = static_cast<double>(p[i]) * decay;
    x -= c.lr * m_hat / (std::sqrt(v_hat) + c.adam_eps);
    p[i] = static_cast<float>(x);
  }
}

void adamw_step(model::ParametersF& params, const std::vector<numerics::TensorF>& grads,
                AdamState& state, const TrainConfig& config) {
  auto& entries = params.entries();
  if (grads.size() != entries.size()) {
    throw ContractError("adamw_step: " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(entries.size()) + " parameters");
  }
  if (state.m.empty()) {
    for (const auto& e : entries) {
      state.m.emplace_back(e.value.size(), 0.0);
      state.v.emplace_back(e.value.size(), 0.0);
    }
  }
  if (state.m.size() != entries.size()) throw ContractError("adamw_step: optimizer state size");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (grads[i].shape() != entries[i].value.shape()) {
      throw ContractError("adamw_step: gradient shape mismatch for " + entries[i].name);
    }
    if (state.m[i].size() != entries[i].value.size()) {
      throw ContractError("adamw_step: optimizer state shape for " + entries[i].name);
    }
  }
  ++state.step;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    adamw_update(entries[i].value.data(), grads[i].data(), state.m[i], state.v[i], state.step,
                 config);
  }
}

}  // namespace maskgil::training
