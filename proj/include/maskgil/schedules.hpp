#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace maskgil::schedules {

// Mask schedule family: gamma(r) is the fraction of tokens still masked
// after fraction r of the iteration budget.
//   root    1 - sqrt(r)
//   linear  1 - r
//   square  1 - r^2
//   cosine  cos(pi r / 2)
//   arccos  (2 / pi) acos(r)
enum class ScheduleKind { root, linear, square, cosine, arccos };

inline constexpr std::array<ScheduleKind, 5> kAllKinds = {
    ScheduleKind::root, ScheduleKind::linear, ScheduleKind::square, ScheduleKind::cosine,
    ScheduleKind::arccos};

std::string to_string(ScheduleKind kind);
ScheduleKind kind_from_string(std::string_view name);

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::arccos;
  std::size_t steps = 8;   // T
  std::size_t tokens = 1;  // N

  // Throws ConfigError unless 1 <= steps <= tokens.
  void validate() const;
};

// gamma(0) = 1 and gamma(1) = 0 exactly; InputError outside [0, 1].
double gamma(ScheduleKind kind, double r);

// Masked counts n_1..n_T after each iteration: n_t = ceil(gamma(t/T) N),
// repaired to strictly decrease and forced to n_T = 0.
std::vector<std::size_t> plan_steps(const ScheduleSpec& spec);

// Tokens fixed at each iteration given a plan (prepending n_0 = N).
std::vector<std::size_t> newly_fixed(const ScheduleSpec& spec,
                                     const std::vector<std::size_t>& plan);

}  // namespace maskgil::schedules
