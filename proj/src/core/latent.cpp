#include "latsep/latent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "latsep/errors.hpp"
#include "latsep/log.hpp"
#include "latsep/rng.hpp"

namespace latsep {

std::size_t ClassLatents::count(Role role) const {
  return static_cast<std::size_t>(std::count(roles.begin(), roles.end(), role));
}

std::vector<int> ClassLatents::oracle_assignment() const {
  std::vector<int> out(roles.size());
  std::transform(roles.begin(), roles.end(), out.begin(), [](Role r) { return r == Role::clean ? 0 : 1; });
  return out;
}

std::map<int, ClassLatents> partition_by_class(const Matrix& latents, std::span<const int> assigned_labels,
                                               const PoisonedDatasetManifest& manifest) {
  if (static_cast<std::size_t>(latents.rows()) != manifest.n || assigned_labels.size() != manifest.n) {
    throw IntegrityError("latents hold " + std::to_string(latents.rows()) + " rows and labels " +
                         std::to_string(assigned_labels.size()) + ", manifest describes " +
                         std::to_string(manifest.n) + " samples");
  }
  const auto roles = manifest.roles();
  std::map<int, std::vector<std::size_t>> rows;
  for (std::size_t i = 0; i < manifest.n; ++i) rows[assigned_labels[i]].push_back(i);

  std::map<int, ClassLatents> out;
  for (auto& [label, idx] : rows) {
    ClassLatents cl;
    cl.label = label;
    cl.reps = select_rows(latents, idx);
    cl.roles.reserve(idx.size());
    for (std::size_t i : idx) cl.roles.push_back(roles[i]);
    cl.indices = std::move(idx);
    out.emplace(label, std::move(cl));
  }
  return out;
}

PcaProjection project_pca(const Matrix& reps) {
  if (reps.rows() < 2) throw InvalidInput("PCA projection needs at least 2 rows");
  PcaModel model = fit_pca(reps, 2);
  PcaProjection out;
  out.coords = Matrix::Zero(reps.rows(), 2);
  const Matrix proj = model.transform(reps);
  const double scale = std::max(model.total_variance, std::numeric_limits<double>::min());
  for (int j = 0; j < 2; ++j) {
    const bool has_axis = j < proj.cols();
    const double var = has_axis ? model.variances(j) : 0.0;
    if (var <= 1e-12 * std::max(1.0, model.total_variance)) {
      out.degenerate[static_cast<std::size_t>(j)] = true;
      log_warn("PCA axis " + std::to_string(j + 1) + " carries no variance; coordinates set to zero");
      continue;
    }
    out.coords.col(j) = proj.col(j);
    out.explained_variance_ratio[static_cast<std::size_t>(j)] = var / scale;
  }
  return out;
}

namespace {

// Row-conditional affinities P_{j|i} matching the target perplexity by bisection on β.
void conditional_affinities(const Matrix& d2, double perplexity, Eigen::MatrixXf& p) {
  const Eigen::Index n = d2.rows();
  const double target = std::log(perplexity);
  p.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    Eigen::VectorXd row(n);
    for (int it = 0; it < 100; ++it) {
      double sum = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        row(j) = j == i ? 0.0 : std::exp(-beta * d2(i, j));
        sum += row(j);
      }
      if (sum <= 0.0) sum = std::numeric_limits<double>::min();
      double h = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) h += beta * d2(i, j) * row(j);
      h = std::log(sum) + h / sum;
      row /= sum;
      const double diff = h - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    p.row(i) = row.cast<float>().transpose();
  }
}

}  // namespace

Matrix project_tsne(const Matrix& reps, std::uint64_t seed, const TsneOptions& opt) {
  const Eigen::Index n = reps.rows();
  if (n < 10) throw InvalidInput("t-SNE needs at least 10 rows");

  const Vector sq = reps.rowwise().squaredNorm();
  Matrix d2 = (-2.0 * reps * reps.transpose()).colwise() + sq;
  d2.rowwise() += sq.transpose();
  d2 = d2.cwiseMax(0.0);
  // Scale distances so the bandwidth search starts in a sensible range.
  const double mean_d2 = d2.sum() / static_cast<double>(n * (n - 1));
  if (mean_d2 > 0.0) d2 /= mean_d2;

  const double perplexity = std::min(opt.perplexity, (static_cast<double>(n) - 1.0) / 3.0);
  Eigen::MatrixXf p;
  conditional_affinities(d2, perplexity, p);
  d2.resize(0, 0);
  Eigen::MatrixXf sym = (p + p.transpose()) / static_cast<float>(2 * n);
  p.resize(0, 0);
  sym = sym.cwiseMax(1e-12f);

  Rng rng(seed, "tsne-init");
  Matrix y(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i, 0) = 1e-4 * rng.normal();
    y(i, 1) = 1e-4 * rng.normal();
  }
  Matrix velocity = Matrix::Zero(n, 2);
  Matrix gains = Matrix::Ones(n, 2);
  Matrix grad(n, 2);

  for (int iter = 0; iter < opt.iterations; ++iter) {
    const double exaggeration = iter < opt.exaggeration_iterations ? opt.early_exaggeration : 1.0;
    const double momentum = iter < opt.exaggeration_iterations ? 0.5 : 0.8;

    double z = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
        z += 2.0 / (1.0 + dx * dx + dy * dy);
      }
    }
    grad.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      double gx = 0.0, gy = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
        const double num = 1.0 / (1.0 + dx * dx + dy * dy);
        const double mult = (exaggeration * sym(i, j) - num / z) * num;
        gx += mult * dx;
        gy += mult * dy;
      }
      grad(i, 0) = 4.0 * gx;
      grad(i, 1) = 4.0 * gy;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int k = 0; k < 2; ++k) {
        const bool same_sign = (grad(i, k) > 0) == (velocity(i, k) > 0);
        gains(i, k) = same_sign ? std::max(gains(i, k) * 0.8, 0.01) : gains(i, k) + 0.2;
        velocity(i, k) = momentum * velocity(i, k) - opt.learning_rate * gains(i, k) * grad(i, k);
        y(i, k) += velocity(i, k);
      }
    }
    y.rowwise() -= y.colwise().mean();
  }
  return y;
}

Vector LinearSvm::decision(const Matrix& x) const {
  return (x * weights).array() + bias;
}

LinearSvm train_linear_svm(const Matrix& x, std::span<const int> labels, const SvmOptions& opt) {
  const Eigen::Index n = x.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw InvalidInput("label count mismatch");
  if (n == 0) throw InvalidInput("SVM needs data");

  // Centre the features and append a constant column for the bias, so the
  // regularised bias term stays small.
  const Vector mean = row_mean(x);
  Matrix xa(n, x.cols() + 1);
  xa.leftCols(x.cols()) = x.rowwise() - mean.transpose();
  xa.col(x.cols()).setOnes();
  const Vector qii = xa.rowwise().squaredNorm();

  Vector alpha = Vector::Zero(n);
  Vector w = Vector::Zero(xa.cols());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(opt.seed, "svm-order");

  LinearSvm model;
  for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double pg_max = -std::numeric_limits<double>::infinity();
    double pg_min = std::numeric_limits<double>::infinity();
    for (Eigen::Index i : order) {
      const double y = labels[static_cast<std::size_t>(i)] > 0 ? 1.0 : -1.0;
      const double g = y * xa.row(i).dot(w) - 1.0;
      double pg = g;
      if (alpha(i) <= 0.0) pg = std::min(g, 0.0);
      else if (alpha(i) >= opt.c) pg = std::max(g, 0.0);
      pg_max = std::max(pg_max, pg);
      pg_min = std::min(pg_min, pg);
      if (pg != 0.0 && qii(i) > 0.0) {
        const double old = alpha(i);
        alpha(i) = std::clamp(old - g / qii(i), 0.0, opt.c);
        w += (alpha(i) - old) * y * xa.row(i).transpose();
      }
    }
    model.epochs = epoch + 1;
    if (pg_max - pg_min < opt.tolerance) {
      model.converged = true;
      break;
    }
  }
  model.weights = w.head(x.cols());
  model.bias = w(x.cols()) - mean.dot(model.weights);
  return model;
}

namespace {

void require_both_roles(const ClassLatents& cl) {
  const std::size_t poison = cl.poison_count();
  if (poison == 0 || poison == cl.size()) {
    throw UndefinedProfile("class " + std::to_string(cl.label) + " needs both clean and trigger-planted rows");
  }
}

}  // namespace

SvmProfile oracle_svm_profile(const ClassLatents& cl, const SvmOptions& options) {
  require_both_roles(cl);
  std::vector<int> y = cl.oracle_assignment();
  for (int& v : y) v = v ? 1 : -1;
  LinearSvm svm = train_linear_svm(cl.reps, y, options);
  if (!svm.converged) {
    log_debug("oracle SVM for class " + std::to_string(cl.label) + " stopped at the epoch cap");
  }
  SvmProfile out;
  out.signed_distances = svm.decision(cl.reps);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < out.signed_distances.size(); ++i) {
    const bool predicted_poison = out.signed_distances(i) > 0.0;
    if (predicted_poison == (y[static_cast<std::size_t>(i)] > 0)) ++correct;
  }
  out.train_accuracy = static_cast<double>(correct) / static_cast<double>(cl.size());
  return out;
}

SeparabilityScore separability_score(const ClassLatents& cl, const SvmOptions& options) {
  require_both_roles(cl);
  SeparabilityScore s;
  s.silhouette = silhouette_score(cl.reps, cl.oracle_assignment());
  s.svm_train_accuracy = oracle_svm_profile(cl, options).train_accuracy;
  s.low_confidence = cl.poison_count() == 1 || cl.count(Role::clean) == 1;
  return s;
}

SeparabilityProfile build_profile(const ClassLatents& cl, std::uint64_t seed, bool with_tsne,
                                  std::size_t tsne_max_points) {
  SeparabilityProfile p;
  p.label = cl.label;
  p.pca_coords = project_pca(cl.reps).coords;
  if (with_tsne && cl.size() >= 10) {
    if (cl.size() <= tsne_max_points) {
      p.tsne_coords = project_tsne(cl.reps, seed);
    } else {
      // Embed a seeded subsample; rows left out get NaN coordinates.
      std::vector<std::size_t> rows(cl.size());
      std::iota(rows.begin(), rows.end(), 0);
      Rng rng(seed, "tsne-subsample");
      rng.shuffle(rows.begin(), rows.end());
      rows.resize(tsne_max_points);
      std::sort(rows.begin(), rows.end());
      Matrix sub = project_tsne(select_rows(cl.reps, rows), seed);
      Matrix full = Matrix::Constant(static_cast<Eigen::Index>(cl.size()), 2, std::numeric_limits<double>::quiet_NaN());
      for (std::size_t i = 0; i < rows.size(); ++i) full.row(static_cast<Eigen::Index>(rows[i])) = sub.row(static_cast<Eigen::Index>(i));
      p.tsne_coords = std::move(full);
    }
  }
  const std::size_t poison = cl.poison_count();
  if (poison > 0 && poison < cl.size()) {
    SvmProfile svm = oracle_svm_profile(cl);
    p.svm_signed_distances = std::move(svm.signed_distances);
    p.svm_train_accuracy = svm.train_accuracy;
    p.silhouette = silhouette_score(cl.reps, cl.oracle_assignment());
    p.low_confidence = poison == 1 || cl.count(Role::clean) == 1;
  }
  return p;
}

}  // namespace latsep
