#include "latsep/metrics.hpp"

#include <algorithm>
#include <unordered_set>

#include "latsep/errors.hpp"

namespace latsep {

namespace {

std::size_t count_role(const PoisonPlan& plan, Role role, std::span<const std::size_t> suspected) {
  std::unordered_set<std::size_t> seen(suspected.begin(), suspected.end());
  std::size_t hits = 0;
  for (const auto& e : plan.entries) {
    if (e.role == role && seen.count(e.index)) ++hits;
  }
  return hits;
}

}  // namespace

std::optional<double> elimination_rate(const PoisonPlan& plan, std::span<const std::size_t> suspected) {
  const std::size_t payload = plan.payload_count();
  if (payload == 0) return std::nullopt;
  return static_cast<double>(count_role(plan, Role::payload, suspected)) / static_cast<double>(payload);
}

double sacrifice_rate(const PoisonPlan& plan, std::size_t n, std::span<const std::size_t> suspected) {
  std::unordered_set<std::size_t> planted;
  for (const auto& e : plan.entries) planted.insert(e.index);
  const std::size_t clean = n - planted.size();
  if (clean == 0) return 0.0;
  std::unordered_set<std::size_t> seen(suspected.begin(), suspected.end());
  std::size_t hits = 0;
  for (std::size_t i : seen) {
    if (!planted.count(i)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(clean);
}

std::size_t cover_removed(const PoisonPlan& plan, std::span<const std::size_t> suspected) {
  return count_role(plan, Role::cover, suspected);
}

CleanseMetrics cleanse_metrics(const PoisonPlan& plan, std::size_t n, std::span<const std::size_t> suspected) {
  for (std::size_t i : suspected) {
    if (i >= n) throw InvalidInput("suspected index " + std::to_string(i) + " is outside [0, " + std::to_string(n) + ")");
  }
  CleanseMetrics m;
  m.elimination_rate = elimination_rate(plan, suspected);
  m.sacrifice_rate = sacrifice_rate(plan, n, suspected);
  m.cover_removed = cover_removed(plan, suspected);
  m.suspected = std::unordered_set<std::size_t>(suspected.begin(), suspected.end()).size();
  return m;
}

std::vector<std::size_t> complement(std::size_t n, std::span<const std::size_t> removed) {
  std::vector<bool> drop(n, false);
  for (std::size_t i : removed) {
    if (i < n) drop[i] = true;
  }
  std::vector<std::size_t> keep;
  keep.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!drop[i]) keep.push_back(i);
  }
  return keep;
}

}  // namespace latsep
