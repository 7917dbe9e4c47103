#pragma once

#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "latsep/latent.hpp"
#include "latsep/linalg.hpp"

namespace latsep {

/// Output of a poison detector: samples to remove and the evidence behind it.
struct CleanseResult {
  std::string method;
  std::map<std::string, double> parameters;
  std::map<int, double> per_class_scores;
  std::set<int> flagged_classes;
  std::set<int> low_confidence_classes;
  std::vector<std::size_t> suspected_indices;  // sorted, unique

  void finalize();  // sorts and deduplicates suspected_indices
  bool operator==(const CleanseResult&) const = default;
};

/// Per class: remove the round(1.5·ρ_p·n_c) samples with the largest squared
/// projection on the top singular direction of the centred class latents.
CleanseResult spectral_signature(const Matrix& latents, std::span<const int> labels, double payload_rate);

struct ActivationClusteringOptions {
  double silhouette_threshold = 0.15;  // 0.25 on GTSRB
  /// Large-latent variant: flag when the smaller cluster holds less than this
  /// fraction of the class, instead of thresholding the silhouette.
  std::optional<double> min_cluster_fraction;
  int reduced_dim = 10;
  std::uint64_t seed = 0;
};

/// Per class: PCA to 10 dimensions, 2-means, and the silhouette of the split.
/// A flagged class loses its smaller cluster.
CleanseResult activation_clustering(const Matrix& latents, std::span<const int> labels,
                                    const ActivationClusteringOptions& options = {});

struct ScanOptions {
  double threshold = std::numbers::e;
  std::optional<int> pca_dim;  // reduce latents first (128 for very wide latents)
  int global_em_iterations = 100;
  int split_em_iterations = 100;
  int split_restarts = 8;  // random initialisations per class; the largest statistic is kept
  double tolerance = 1e-5;
  std::uint64_t seed = 0;
};

/// Decomposition of representations into class identity and within-class
/// variation, estimated on clean data.
struct ScanGlobalModel {
  Matrix identity_cov;   // S_u
  Matrix variation_cov;  // S_e
  int iterations = 0;
  bool converged = false;
};

ScanGlobalModel scan_global_model(const Matrix& reps, std::span<const int> labels, int num_classes,
                                  int max_iterations = 100, double tolerance = 1e-5);

struct ScanClassStatistic {
  double statistic = 0.0;    // two-component vs one-component likelihood-ratio statistic
  std::vector<int> split;    // 0/1 component of each row
  bool converged = false;
};

/// Two-component split of one class's centred representations and its test statistic.
ScanClassStatistic scan_class_statistic(const Matrix& class_reps, const ScanGlobalModel& model,
                                        std::uint64_t seed, int max_iterations = 100, int restarts = 1);

/// SCAn: per-class statistics turned into MAD anomaly indices; classes above the
/// threshold lose the component that holds fewer clean-base samples.
CleanseResult scan(const Matrix& latents, std::span<const int> labels, const Matrix& clean_base,
                   std::span<const int> clean_base_labels, const ScanOptions& options = {});

struct SpectreOptions {
  int pca_dim = 32;
  double que_alpha = 4.0;
  int robust_iterations = 20;
  double ridge = 1e-6;  // relative to the mean eigenvalue
};

/// QUE outlier scores of rows after robust whitening.
Vector que_scores(const Matrix& reps, double trim_fraction, const SpectreOptions& options = {});

/// SPECTRE: the class whose top QUE scores are largest loses its
/// round(1.5·ρ_p·n) highest-scoring samples; other classes are untouched.
CleanseResult spectre(const Matrix& latents, std::span<const int> labels, double payload_rate,
                      const SpectreOptions& options = {});

/// Synthetic class: clean rows ~ N(0, I), poison rows ~ N(separation·u, I)
/// for a seeded random unit vector u. Poison rows get role payload.
ClassLatents synth_latents(std::size_t n_clean, std::size_t n_poison, int dim, double separation,
                           std::uint64_t seed);

struct SynthDataset {
  Matrix latents;
  std::vector<int> labels;
  std::vector<bool> poison;
  Matrix clean_base;
  std::vector<int> clean_base_labels;
};

/// Several classes with well-separated random means; `poisoned_class` also
/// receives `n_poison` rows offset by `separation` along a random direction.
/// The clean base is drawn from the clean class distributions.
SynthDataset synth_multiclass_latents(int num_classes, std::size_t n_per_class, std::size_t n_poison, int dim,
                                      double separation, int poisoned_class, std::size_t base_per_class,
                                      std::uint64_t seed);

}  // namespace latsep
