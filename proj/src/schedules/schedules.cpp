#include "maskgil/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "maskgil/errors.hpp"

namespace maskgil::schedules {

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::root: return "root";
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::square: return "square";
    case ScheduleKind::cosine: return "cosine";
    case ScheduleKind::arccos: return "arccos";
  }
  return "unknown";
}

ScheduleKind kind_from_string(std::string_view name) {
  for (ScheduleKind k : kAllKinds) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown schedule '" + std::string(name) + "'");
}

void ScheduleSpec::validate() const {
  if (steps == 0) throw ConfigError("schedule: steps must be at least 1");
  if (tokens == 0) throw ConfigError("schedule: token count must be at least 1");
  if (steps > tokens) {
    throw ConfigError("schedule: " + std::to_string(steps) + " steps cannot fix " +
                      std::to_string(tokens) + " tokens at one or more per step");
  }
}

double gamma(ScheduleKind kind, double r) {
  if (!(r >= 0.0 && r <= 1.0)) throw InputError("gamma: r must lie in [0, 1]");
  if (r == 0.0) return 1.0;
  if (r == 1.0) return 0.0;
  switch (kind) {
    case ScheduleKind::root: return 1.0 - std::sqrt(r);
    case ScheduleKind::linear: return 1.0 - r;
    case ScheduleKind::square: return 1.0 - r * r;
    case ScheduleKind::cosine: return std::cos(std::numbers::pi * r / 2.0);
    case ScheduleKind::arccos: return 2.0 / std::numbers::pi * std::acos(r);
  }
  return 0.0;
}

std::vector<std::size_t> plan_steps(const ScheduleSpec& spec) {
  spec.validate();
  const double n = static_cast<double>(spec.tokens);
  std::vector<std::size_t> plan;
  plan.reserve(spec.steps);
  std::size_t prev = spec.tokens;
  for (std::size_t t = 1; t <= spec.steps; ++t) {
    const double r = static_cast<double>(t) / static_cast<double>(spec.steps);
    // Slack absorbs round-off such as (1 - 0.3) * 10 = 7.000000000000001.
    const double x = gamma(spec.kind, r) * n;
    std::size_t masked = static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
    // Keep one token in reserve for each remaining step, and progress by at
    // least one token now. prev >= steps - t + 1 holds inductively.
    masked = std::max(masked, spec.steps - t);
    if (masked >= prev) masked = prev - 1;
    if (t == spec.steps) masked = 0;
    plan.push_back(masked);
    prev = masked;
  }
  return plan;
}

std::vector<std::size_t> newly_fixed(const ScheduleSpec& spec,
                                     const std::vector<std::size_t>& plan) {
  std::vector<std::size_t> fixed;
  fixed.reserve(plan.size());
  std::size_t prev = spec.tokens;
  for (std::size_t n : plan) {
    fixed.push_back(prev - n);
    prev = n;
  }
  return fixed;
}

}  // namespace maskgil::schedules
