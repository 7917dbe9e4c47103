#include "latsep/defense_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "latsep/errors.hpp"
#include "latsep/linalg.hpp"

namespace latsep {

std::vector<double> mad_anomaly_indices(std::span<const double> values) {
  std::vector<double> finite;
  for (double v : values) {
    if (std::isfinite(v)) finite.push_back(v);
  }
  std::vector<double> out(values.size(), 0.0);
  if (finite.empty()) return out;
  const double med = median(finite);
  std::vector<double> dev;
  dev.reserve(finite.size());
  for (double v : finite) dev.push_back(std::abs(v - med));
  const double mad = kMadConsistency * median(dev);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) continue;
    const double d = std::abs(values[i] - med);
    if (mad > 0.0) {
      out[i] = d / mad;
    } else {
      out[i] = d > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
  }
  return out;
}

std::optional<int> select_nc_target(std::span<const double> mask_norms, std::span<const double> anomaly_indices,
                                    double threshold) {
  if (mask_norms.size() != anomaly_indices.size()) throw InvalidInput("norm and index counts differ");
  std::vector<double> finite;
  for (double v : mask_norms) {
    if (std::isfinite(v)) finite.push_back(v);
  }
  if (finite.empty()) return std::nullopt;
  const double med = median(finite);
  std::optional<int> best;
  for (std::size_t c = 0; c < mask_norms.size(); ++c) {
    if (!std::isfinite(mask_norms[c]) || mask_norms[c] > med) continue;
    if (!(anomaly_indices[c] > threshold)) continue;
    if (!best || anomaly_indices[c] > anomaly_indices[static_cast<std::size_t>(*best)]) best = static_cast<int>(c);
  }
  return best;
}

double shannon_entropy(std::span<const float> probabilities) {
  double h = 0.0;
  for (float p : probabilities) {
    if (p > 0.0f) h -= static_cast<double>(p) * std::log(static_cast<double>(p));
  }
  return h;
}

double strip_threshold(std::span<const double> validation_entropies, double fpr) {
  if (validation_entropies.empty()) throw InvalidInput("STRIP needs validation entropies");
  if (!(fpr >= 0.0 && fpr < 1.0)) throw InvalidInput("STRIP false positive rate must lie in [0,1)");
  std::vector<double> sorted(validation_entropies.begin(), validation_entropies.end());
  std::sort(sorted.begin(), sorted.end());
  const auto k = static_cast<std::size_t>(std::floor(fpr * static_cast<double>(sorted.size())));
  return sorted[std::min(k, sorted.size() - 1)];
}

CleanseResult strip_cleanse(std::span<const double> train_entropies, std::span<const double> validation_entropies,
                            double fpr) {
  CleanseResult res;
  res.method = "strip_cleanse";
  const double threshold = strip_threshold(validation_entropies, fpr);
  res.parameters = {{"fpr", fpr},
                    {"threshold", threshold},
                    {"validation_size", static_cast<double>(validation_entropies.size())}};
  for (std::size_t i = 0; i < train_entropies.size(); ++i) {
    if (train_entropies[i] < threshold) res.suspected_indices.push_back(i);
  }
  res.finalize();
  return res;
}

double isolation_precision(const PoisonPlan& plan, std::span<const std::size_t> isolated) {
  if (isolated.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i : isolated) {
    auto it = std::lower_bound(plan.entries.begin(), plan.entries.end(), i,
                               [](const PlanEntry& e, std::size_t idx) { return e.index < idx; });
    if (it != plan.entries.end() && it->index == i && it->role == Role::payload) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(isolated.size());
}

}  // namespace latsep
