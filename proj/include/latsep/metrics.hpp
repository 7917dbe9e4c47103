#pragma once

#include <optional>
#include <span>
#include <vector>

#include "latsep/poison.hpp"

namespace latsep {

/// |suspected ∩ payload| / |payload|; nullopt when the plan has no payload.
std::optional<double> elimination_rate(const PoisonPlan& plan, std::span<const std::size_t> suspected);

/// |suspected ∩ clean| / |clean| over the n samples; cover samples count as neither.
double sacrifice_rate(const PoisonPlan& plan, std::size_t n, std::span<const std::size_t> suspected);

std::size_t cover_removed(const PoisonPlan& plan, std::span<const std::size_t> suspected);

struct CleanseMetrics {
  std::optional<double> elimination_rate;
  double sacrifice_rate = 0.0;
  std::size_t cover_removed = 0;
  std::size_t suspected = 0;
};

/// Throws InvalidInput when a suspected index is outside [0, n).
CleanseMetrics cleanse_metrics(const PoisonPlan& plan, std::size_t n, std::span<const std::size_t> suspected);

/// Indices in [0, n) not listed in `removed`.
std::vector<std::size_t> complement(std::size_t n, std::span<const std::size_t> removed);

}  // namespace latsep
