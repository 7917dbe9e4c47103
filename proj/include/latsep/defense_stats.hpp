#pragma once

#include <optional>
#include <span>
#include <vector>

#include "latsep/cleansers.hpp"
#include "latsep/poison.hpp"

namespace latsep {

inline constexpr double kMadConsistency = 1.4826;

/// |x_i - median| / (1.4826 · MAD) for every entry. Non-finite entries are
/// left out of the median and MAD and get an index of 0. A zero MAD gives 0
/// for entries at the median and +inf elsewhere.
std::vector<double> mad_anomaly_indices(std::span<const double> values);

/// Neural Cleanse target rule: among classes whose norm is at most the median
/// of finite norms, the one with the largest anomaly index, if that index > threshold.
std::optional<int> select_nc_target(std::span<const double> mask_norms, std::span<const double> anomaly_indices,
                                    double threshold = 2.0);

/// Shannon entropy (natural log) of a probability vector; zero entries contribute 0.
double shannon_entropy(std::span<const float> probabilities);

/// Entropy below which a fraction `fpr` of the validation entropies falls:
/// the floor(fpr·m)-th smallest validation entropy.
double strip_threshold(std::span<const double> validation_entropies, double fpr = 0.10);

/// Training samples with entropy strictly below the validation threshold.
CleanseResult strip_cleanse(std::span<const double> train_entropies, std::span<const double> validation_entropies,
                            double fpr = 0.10);

/// Fraction of `isolated` that carry the payload role.
double isolation_precision(const PoisonPlan& plan, std::span<const std::size_t> isolated);

}  // namespace latsep
