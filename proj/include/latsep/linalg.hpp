#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace latsep {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Row mean of a sample matrix (rows = samples).
Vector row_mean(const Matrix& x);
Matrix center_rows(const Matrix& x);

/// Sample covariance with an n-1 denominator.
Matrix covariance(const Matrix& x);

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
struct SymmetricEigen {
  Vector values;
  Matrix vectors;  // columns
};
SymmetricEigen symmetric_eigen(const Matrix& s);

/// Principal axes of the mean-centred data, in descending variance order.
/// Each axis is sign-normalised so its largest-magnitude entry is positive.
struct PcaModel {
  Vector mean;
  Matrix components;  // d × k
  Vector variances;   // k
  double total_variance = 0.0;

  Matrix transform(const Matrix& x) const;
};
PcaModel fit_pca(const Matrix& x, int k);

/// Pseudo-inverse of a symmetric matrix; eigenvalues below rel_tol·max are dropped.
Matrix symmetric_pinv(const Matrix& s, double rel_tol = 1e-10);

/// exp(s) of a symmetric matrix.
Matrix symmetric_expm(const Matrix& s);

/// s^{-1/2} of a symmetric positive definite matrix, ridge added to the spectrum.
Matrix symmetric_inv_sqrt(const Matrix& s, double ridge = 0.0);

Matrix select_rows(const Matrix& x, std::span<const std::size_t> rows);

/// Mean silhouette coefficient under Euclidean distance. Points in singleton
/// clusters score 0. Requires at least two non-empty clusters.
double silhouette_score(const Matrix& x, std::span<const int> assignment);

struct KMeansResult {
  std::vector<int> assignment;
  Matrix centroids;
  double inertia = 0.0;
  bool converged = false;
};

/// Lloyd iterations from k-means++ seeds; the best of `restarts` runs by inertia.
KMeansResult kmeans(const Matrix& x, int k, std::uint64_t seed, int restarts = 10, int max_iter = 300);

/// Median of a non-empty list.
double median(std::vector<double> v);

}  // namespace latsep
