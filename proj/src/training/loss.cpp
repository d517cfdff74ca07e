#include "maskgil/training/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "maskgil/errors.hpp"
#include "maskgil/schedules.hpp"

namespace maskgil::training {

std::size_t mask_count(double r, std::size_t n) {
  const double x = schedules::gamma(schedules::ScheduleKind::cosine, r) * static_cast<double>(n);
  const auto c = static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
  return std::clamp<std::size_t>(c, 1, n);
}

std::vector<std::size_t> sample_training_mask(Rng& rng, std::size_t n) {
  if (n == 0) throw InputError("sample_training_mask: N must be at least 1");
  const std::size_t count = mask_count(uniform01(rng), n);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `count` slots are a uniform subset.
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n - i));
    std::swap(perm[i], perm[j]);
  }
  perm.resize(count);
  std::sort(perm.begin(), perm.end());
  return perm;
}

template <class T>
double masked_ce_loss(const numerics::Tensor<T>& logits, std::span<const TokenId> targets,
                      std::span<const std::size_t> mask, double smoothing) {
  if (mask.empty()) throw ContractError("masked_ce_loss: empty mask");
  if (targets.size() != logits.rows()) throw ShapeError("masked_ce_loss: target count");
  const std::size_t k = logits.cols();
  double total = 0.0;
  for (std::size_t pos : mask) {
    if (pos >= logits.rows()) throw ShapeError("masked_ce_loss: mask position out of range");
    const TokenId t = targets[pos];
    if (t < 0 || static_cast<std::size_t>(t) >= k) throw InputError("masked_ce_loss: bad target");
    auto row = logits.row(pos);
    double mx = -INFINITY;
    for (T v : row) mx = std::max(mx, static_cast<double>(v));
    double z = 0.0;
    for (T v : row) z += std::exp(static_cast<double>(v) - mx);
    const double lz = mx + std::log(z);
    double sum_logp = 0.0;
    for (T v : row) sum_logp += static_cast<double>(v) - lz;
    const double target_logp = static_cast<double>(row[static_cast<std::size_t>(t)]) - lz;
    total += -((1.0 - smoothing) * target_logp + smoothing / static_cast<double>(k) * sum_logp);
  }
  return total / static_cast<double>(mask.size());
}

template double masked_ce_loss<float>(const numerics::Tensor<float>&, std::span<const TokenId>,
                                      std::span<const std::size_t>, double);
template double masked_ce_loss<double>(const numerics::Tensor<double>&, std::span<const TokenId>,
                                       std::span<const std::size_t>, double);

}  // namespace maskgil::training
