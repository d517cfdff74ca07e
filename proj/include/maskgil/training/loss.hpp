#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "maskgil/numerics/tensor.hpp"
#include "maskgil/types.hpp"

namespace maskgil::training {

// Number of positions masked for ratio draw r: max(1, ceil(cos(pi r / 2) N)).
std::size_t mask_count(double r, std::size_t n);

// Draws r ~ U[0, 1) and a uniformly random subset of mask_count(r, N)
// positions, returned in ascending order.
std::vector<std::size_t> sample_training_mask(Rng& rng, std::size_t n);

// Mean label-smoothed cross entropy over the masked positions of one
// sequence, computed in double.
template <class T>
double masked_ce_loss(const numerics::Tensor<T>& logits, std::span<const TokenId> targets,
                      std::span<const std::size_t> mask, double smoothing);

}  // namespace maskgil::training
