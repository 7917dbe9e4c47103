#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "latsep/linalg.hpp"
#include "latsep/poison.hpp"

namespace latsep {

/// Latent rows of every sample carrying one (possibly poisoned) label.
/// Clean rows form H_B; payload and cover rows together form H_A.
struct ClassLatents {
  int label = 0;
  Matrix reps;
  std::vector<Role> roles;
  std::vector<std::size_t> indices;  // dataset index of each row

  std::size_t size() const { return roles.size(); }
  std::size_t count(Role role) const;
  std::size_t poison_count() const { return count(Role::payload) + count(Role::cover); }
  /// 1 for trigger-planted rows, 0 for clean rows.
  std::vector<int> oracle_assignment() const;
};

/// Groups latent rows by assigned label; roles come from the manifest.
std::map<int, ClassLatents> partition_by_class(const Matrix& latents, std::span<const int> assigned_labels,
                                               const PoisonedDatasetManifest& manifest);

struct PcaProjection {
  Matrix coords;  // n × 2
  std::array<double, 2> explained_variance_ratio{};
  std::array<bool, 2> degenerate{};  // axis carries zero variance
};

PcaProjection project_pca(const Matrix& reps);

struct TsneOptions {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
};

/// Exact (O(n²)) t-SNE. Perplexity is capped at (n-1)/3 for small inputs.
Matrix project_tsne(const Matrix& reps, std::uint64_t seed, const TsneOptions& options = {});

struct SvmOptions {
  double c = 100.0;  // large penalty approximating a hard margin
  int max_epochs = 2000;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
};

struct LinearSvm {
  Vector weights;
  double bias = 0.0;
  int epochs = 0;
  bool converged = false;

  /// w·x + b for every row. ±1 lie on the margins.
  Vector decision(const Matrix& x) const;
};

/// L1-loss linear SVM by dual coordinate descent. Labels are ±1.
LinearSvm train_linear_svm(const Matrix& x, std::span<const int> labels, const SvmOptions& options = {});

struct SvmProfile {
  Vector signed_distances;  // decision values, positive = trigger-planted side
  double train_accuracy = 0.0;
};

/// Oracle linear separator between clean and trigger-planted rows.
/// Throws UndefinedProfile unless both roles are present.
SvmProfile oracle_svm_profile(const ClassLatents& cl, const SvmOptions& options = {});

struct SeparabilityScore {
  double silhouette = 0.0;
  double svm_train_accuracy = 0.0;
  bool low_confidence = false;  // a role has a single row
};

SeparabilityScore separability_score(const ClassLatents& cl, const SvmOptions& options = {});

struct SeparabilityProfile {
  int label = 0;
  Matrix pca_coords;
  std::optional<Matrix> tsne_coords;
  std::optional<Vector> svm_signed_distances;
  std::optional<double> svm_train_accuracy;
  std::optional<double> silhouette;
  bool low_confidence = false;
};

/// Everything needed for one class's figures. SVM and silhouette fields stay
/// empty when the class has no trigger-planted rows.
SeparabilityProfile build_profile(const ClassLatents& cl, std::uint64_t seed, bool with_tsne,
                                  std::size_t tsne_max_points = 2000);

}  // namespace latsep
