#include "latsep/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "latsep/errors.hpp"
#include "latsep/log.hpp"
#include "latsep/rng.hpp"

namespace latsep {

Vector row_mean(const Matrix& x) {
  if (x.rows() == 0) return Vector::Zero(x.cols());
  return x.colwise().mean().transpose();
}

Matrix center_rows(const Matrix& x) { return x.rowwise() - row_mean(x).transpose(); }

Matrix covariance(const Matrix& x) {
  if (x.rows() < 2) return Matrix::Zero(x.cols(), x.cols());
  Matrix c = center_rows(x);
  return (c.transpose() * c) / static_cast<double>(x.rows() - 1);
}

SymmetricEigen symmetric_eigen(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(s);
  if (solver.info() != Eigen::Success) throw Error("symmetric eigendecomposition failed");
  // Eigen returns ascending order.
  SymmetricEigen out{solver.eigenvalues().reverse(), solver.eigenvectors().rowwise().reverse()};
  return out;
}

Matrix PcaModel::transform(const Matrix& x) const {
  return (x.rowwise() - mean.transpose()) * components;
}

PcaModel fit_pca(const Matrix& x, int k) {
  if (x.rows() < 1) throw InvalidInput("PCA needs at least one row");
  k = std::min<int>(k, static_cast<int>(x.cols()));
  PcaModel model;
  model.mean = row_mean(x);
  Matrix c = x.rowwise() - model.mean.transpose();
  const double denom = std::max<Eigen::Index>(x.rows() - 1, 1);
  Matrix cov = (c.transpose() * c) / denom;
  auto eig = symmetric_eigen(cov);
  model.components = eig.vectors.leftCols(k);
  model.variances = eig.values.head(k).cwiseMax(0.0);
  model.total_variance = std::max(0.0, cov.trace());
  for (int j = 0; j < k; ++j) {
    Eigen::Index arg = 0;
    model.components.col(j).cwiseAbs().maxCoeff(&arg);
    if (model.components(arg, j) < 0) model.components.col(j) *= -1.0;
  }
  return model;
}

Matrix symmetric_pinv(const Matrix& s, double rel_tol) {
  auto eig = symmetric_eigen(s);
  const double cutoff = rel_tol * std::max(std::abs(eig.values.maxCoeff()), std::abs(eig.values.minCoeff()));
  Vector inv = eig.values.unaryExpr([cutoff](double v) { return std::abs(v) > cutoff ? 1.0 / v : 0.0; });
  return eig.vectors * inv.asDiagonal() * eig.vectors.transpose();
}

Matrix symmetric_expm(const Matrix& s) {
  auto eig = symmetric_eigen(s);
  const double top = eig.values.maxCoeff();
  // exp(s) = exp(top) · V exp(Λ - top) Vᵀ; the scale cancels in trace-normalised uses
  // but is kept here so the function stays an exact exponential.
  Vector e = (eig.values.array() - top).exp().matrix();
  return std::exp(top) * (eig.vectors * e.asDiagonal() * eig.vectors.transpose());
}

Matrix symmetric_inv_sqrt(const Matrix& s, double ridge) {
  auto eig = symmetric_eigen(s);
  Vector d = eig.values.unaryExpr([ridge](double v) { return 1.0 / std::sqrt(std::max(v, 0.0) + ridge); });
  if (!d.allFinite()) throw InvalidInput("matrix is singular; add a ridge");
  return eig.vectors * d.asDiagonal() * eig.vectors.transpose();
}

Matrix select_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

double silhouette_score(const Matrix& x, std::span<const int> assignment) {
  const Eigen::Index n = x.rows();
  if (static_cast<std::size_t>(n) != assignment.size()) throw InvalidInput("assignment size mismatch");
  int k = 0;
  for (int a : assignment) {
    if (a < 0) throw InvalidInput("negative cluster id");
    k = std::max(k, a + 1);
  }
  std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
  for (int a : assignment) ++sizes[static_cast<std::size_t>(a)];
  if (std::count_if(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; }) < 2) {
    throw InvalidInput("silhouette needs at least two non-empty clusters");
  }

  const Vector sq = x.rowwise().squaredNorm();
  const Eigen::Index block = 256;
  double total = 0.0;
  Matrix sums(block, k);
  for (Eigen::Index start = 0; start < n; start += block) {
    const Eigen::Index rows = std::min(block, n - start);
    Matrix gram = x.middleRows(start, rows) * x.transpose();
    sums.setZero();
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double d2 = sq(start + i) + sq(j) - 2.0 * gram(i, j);
        sums(i, assignment[static_cast<std::size_t>(j)]) += d2 > 0.0 ? std::sqrt(d2) : 0.0;
      }
    }
    for (Eigen::Index i = 0; i < rows; ++i) {
      const int own = assignment[static_cast<std::size_t>(start + i)];
      const std::size_t own_size = sizes[static_cast<std::size_t>(own)];
      if (own_size <= 1) continue;  // singleton: s = 0
      const double a = sums(i, own) / static_cast<double>(own_size - 1);
      double b = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        if (c == own || sizes[static_cast<std::size_t>(c)] == 0) continue;
        b = std::min(b, sums(i, c) / static_cast<double>(sizes[static_cast<std::size_t>(c)]));
      }
      const double m = std::max(a, b);
      if (m > 0.0) total += (b - a) / m;
    }
  }
  return total / static_cast<double>(n);
}

namespace {

KMeansResult kmeans_once(const Matrix& x, int k, Rng& rng, int max_iter) {
  const Eigen::Index n = x.rows();
  Matrix centroids(k, x.cols());
  // k-means++ seeding
  centroids.row(0) = x.row(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n))));
  Vector best = (x.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = best.sum();
    Eigen::Index pick = 0;
    if (total <= 0.0) {
      pick = static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    } else {
      double r = rng.uniform() * total;
      for (pick = 0; pick < n - 1; ++pick) {
        r -= best(pick);
        if (r <= 0.0) break;
      }
    }
    centroids.row(c) = x.row(pick);
    best = best.cwiseMin((x.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }

  KMeansResult res;
  res.assignment.assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    res.inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int arg = 0;
      double dmin = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x.row(i) - centroids.row(c)).squaredNorm();
        if (d < dmin) {
          dmin = d;
          arg = c;
        }
      }
      res.inertia += dmin;
      if (res.assignment[static_cast<std::size_t>(i)] != arg) {
        res.assignment[static_cast<std::size_t>(i)] = arg;
        changed = true;
      }
    }
    if (!changed) {
      res.converged = true;
      break;
    }
    Matrix sums = Matrix::Zero(k, x.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(res.assignment[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(res.assignment[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        // Empty cluster: reseed at the point farthest from its centroid.
        Eigen::Index far = 0;
        Vector d(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          d(i) = (x.row(i) - centroids.row(res.assignment[static_cast<std::size_t>(i)])).squaredNorm();
        }
        d.maxCoeff(&far);
        centroids.row(c) = x.row(far);
      }
    }
  }
  res.centroids = std::move(centroids);
  return res;
}

}  // namespace

KMeansResult kmeans(const Matrix& x, int k, std::uint64_t seed, int restarts, int max_iter) {
  if (k < 1 || x.rows() < k) throw InvalidInput("k-means needs at least k rows");
  constexpr int kRetryBudget = 3;
  Rng rng(seed, "kmeans");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt <= kRetryBudget; ++attempt) {
    for (int r = 0; r < restarts; ++r) {
      KMeansResult res = kmeans_once(x, k, rng, max_iter);
      if (res.converged && res.inertia < best.inertia) best = std::move(res);
    }
    if (best.converged) return best;
  }
  log_warn("k-means did not converge within the retry budget; using the last iterate");
  return kmeans_once(x, k, rng, max_iter);
}

double median(std::vector<double> v) {
  if (v.empty()) throw InvalidInput("median of an empty list");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace latsep
