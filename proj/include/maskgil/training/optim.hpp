#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "maskgil/model/model.hpp"
#include "maskgil/training/config.hpp"

namespace maskgil::training {

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;
};

// One element-wise AdamW update at (1-based) step t:
//   p <- p (1 - lr wd);  p <- p - lr m_hat / (sqrt(v_hat) + eps)
void adamw_update(std::span<float> p, std::span<const float> g, std::span<double> m,
                  std::span<double> v, std::size_t t, const TrainConfig& config);

// Updates every parameter; grads are in parameter order. ContractError on
// any count or shape mismatch. Moment buffers are created on first use.
void adamw_step(model::ParametersF& params, const std::vector<numerics::TensorF>& grads,
                AdamState& state, const TrainConfig& config);

}  // namespace maskgil::training
