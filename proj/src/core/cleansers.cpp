#include "latsep/cleansers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "latsep/defense_stats.hpp"
#include "latsep/errors.hpp"
#include "latsep/log.hpp"
#include "latsep/poison.hpp"
#include "latsep/rng.hpp"

namespace latsep {

void CleanseResult::finalize() {
  std::sort(suspected_indices.begin(), suspected_indices.end());
  suspected_indices.erase(std::unique(suspected_indices.begin(), suspected_indices.end()),
                          suspected_indices.end());
}

namespace {

std::map<int, std::vector<std::size_t>> rows_by_class(const Matrix& latents, std::span<const int> labels) {
  if (static_cast<std::size_t>(latents.rows()) != labels.size()) {
    throw InvalidInput("latents hold " + std::to_string(latents.rows()) + " rows but " +
                       std::to_string(labels.size()) + " labels were given");
  }
  std::map<int, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw InvalidInput("negative label");
    out[labels[i]].push_back(i);
  }
  return out;
}

// Indices of the `k` largest scores, ties broken by lower position.
std::vector<std::size_t> top_k(const Vector& scores, std::size_t k) {
  std::vector<std::size_t> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double sa = scores(static_cast<Eigen::Index>(a));
                      const double sb = scores(static_cast<Eigen::Index>(b));
                      return sa != sb ? sa > sb : a < b;
                    });
  order.resize(k);
  return order;
}

}  // namespace

CleanseResult spectral_signature(const Matrix& latents, std::span<const int> labels, double payload_rate) {
  CleanseResult res;
  res.method = "spectral_signature";
  res.parameters = {{"payload_rate", payload_rate}, {"budget_multiplier", 1.5}};

  for (const auto& [label, rows] : rows_by_class(latents, labels)) {
    if (rows.size() < 2) {
      log_warn("spectral signature: class " + std::to_string(label) + " has fewer than 2 samples, skipped");
      continue;
    }
    Matrix c = center_rows(select_rows(latents, rows));
    Eigen::JacobiSVD<Matrix> svd(c, Eigen::ComputeThinV);
    if (svd.singularValues().size() == 0 || svd.singularValues()(0) <= 1e-12) {
      log_warn("spectral signature: class " + std::to_string(label) + " has a rank-0 latent matrix, skipped");
      continue;
    }
    const Vector v = svd.matrixV().col(0);
    const Vector scores = (c * v).array().square();
    const std::size_t budget = round_half_up(1.5 * payload_rate * static_cast<double>(rows.size()));
    res.per_class_scores[label] = scores.maxCoeff();
    if (budget == 0) continue;
    res.flagged_classes.insert(label);
    for (std::size_t r : top_k(scores, budget)) res.suspected_indices.push_back(rows[r]);
  }
  res.finalize();
  return res;
}

CleanseResult activation_clustering(const Matrix& latents, std::span<const int> labels,
                                    const ActivationClusteringOptions& opt) {
  CleanseResult res;
  res.method = "activation_clustering";
  res.parameters = {{"silhouette_threshold", opt.silhouette_threshold},
                    {"reduced_dim", static_cast<double>(opt.reduced_dim)},
                    {"clusters", 2.0}};
  if (opt.min_cluster_fraction) res.parameters["min_cluster_fraction"] = *opt.min_cluster_fraction;

  for (const auto& [label, rows] : rows_by_class(latents, labels)) {
    if (rows.size() < 4) {
      log_warn("activation clustering: class " + std::to_string(label) + " has fewer than 4 samples, skipped");
      continue;
    }
    Matrix x = select_rows(latents, rows);
    Matrix z = x.cols() > opt.reduced_dim ? fit_pca(x, opt.reduced_dim).transform(x) : center_rows(x);
    KMeansResult km = kmeans(z, 2, derive_seed(opt.seed, "ac-class-" + std::to_string(label)));

    std::array<std::size_t, 2> sizes{};
    for (int a : km.assignment) ++sizes[static_cast<std::size_t>(a)];
    double sil = 0.0;
    if (sizes[0] > 0 && sizes[1] > 0) sil = silhouette_score(z, km.assignment);
    res.per_class_scores[label] = sil;

    // Smaller cluster is suspect; on a tie, the cluster not holding the class's first row.
    int suspect = sizes[0] < sizes[1] ? 0 : 1;
    if (sizes[0] == sizes[1]) suspect = 1 - km.assignment.front();
    const double fraction = static_cast<double>(sizes[static_cast<std::size_t>(suspect)]) /
                            static_cast<double>(rows.size());

    const bool flagged = opt.min_cluster_fraction ? fraction < *opt.min_cluster_fraction && fraction > 0.0
                                                  : sil > opt.silhouette_threshold;
    if (!flagged) continue;
    res.flagged_classes.insert(label);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (km.assignment[r] == suspect) res.suspected_indices.push_back(rows[r]);
    }
  }
  res.finalize();
  return res;
}

ScanGlobalModel scan_global_model(const Matrix& reps, std::span<const int> labels, int num_classes,
                                  int max_iterations, double tolerance) {
  const Eigen::Index n = reps.rows();
  const Eigen::Index m = reps.cols();
  if (static_cast<std::size_t>(n) != labels.size()) throw InvalidInput("clean base label count mismatch");
  if (n < 2) throw InvalidInput("SCAn needs a clean base of at least 2 samples");

  const Matrix x = center_rows(reps);
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  Matrix class_mean = Matrix::Zero(num_classes, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int k = labels[static_cast<std::size_t>(i)];
    if (k < 0 || k >= num_classes) throw InvalidInput("clean base label out of range");
    class_mean.row(k) += x.row(i);
    counts[static_cast<std::size_t>(k)] += 1.0;
  }
  for (int k = 0; k < num_classes; ++k) {
    if (counts[static_cast<std::size_t>(k)] > 0) class_mean.row(k) /= counts[static_cast<std::size_t>(k)];
  }

  auto covs = [&](const Matrix& means, Matrix& su, Matrix& se) {
    Matrix u(n, m), e(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int k = labels[static_cast<std::size_t>(i)];
      u.row(i) = means.row(k);
      e.row(i) = x.row(i) - means.row(k);
    }
    su = covariance(u);
    se = covariance(e);
  };

  ScanGlobalModel model;
  covs(class_mean, model.identity_cov, model.variation_cov);
  for (int iter = 0; iter < max_iterations; ++iter) {
    const Matrix last_su = model.identity_cov;
    const Matrix last_se = model.variation_cov;
    const Matrix f = symmetric_pinv(model.variation_cov);
    const Matrix su_f = model.identity_cov * f;

    // E-step: posterior class identities.
    Matrix um = Matrix::Zero(num_classes, m);
    std::vector<Matrix> se_g(static_cast<std::size_t>(num_classes));
    for (int k = 0; k < num_classes; ++k) {
      if (counts[static_cast<std::size_t>(k)] == 0) continue;
      Matrix g = -symmetric_pinv(counts[static_cast<std::size_t>(k)] * model.identity_cov + model.variation_cov) * su_f;
      se_g[static_cast<std::size_t>(k)] = model.variation_cov * g;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const int k = labels[static_cast<std::size_t>(i)];
      um.row(k) -= (se_g[static_cast<std::size_t>(k)] * x.row(i).transpose()).transpose();
    }
    // M-step
    covs(um, model.identity_cov, model.variation_cov);
    model.iterations = iter + 1;
    const double dist = (model.identity_cov - last_su).norm() + (model.variation_cov - last_se).norm();
    if (dist < tolerance) {
      model.converged = true;
      break;
    }
  }
  return model;
}

namespace {

struct Split {
  std::vector<int> assignment;
  bool converged = false;
};

Split find_split(const Matrix& cx, const Matrix& f, Rng& rng, int max_iterations) {
  const Eigen::Index n = cx.rows();
  Split out;
  out.assignment.assign(static_cast<std::size_t>(n), 0);
  if (n < 2) {
    out.converged = true;
    return out;
  }
  auto& z = out.assignment;
  for (auto& s : z) s = rng.uniform() >= 0.5 ? 1 : 0;
  if (std::count(z.begin(), z.end(), 1) == 0) z[0] = 1;
  if (std::count(z.begin(), z.end(), 0) == 0) z[0] = 0;

  for (int step = 0; step < max_iterations; ++step) {
    const std::vector<int> last = z;
    Vector s1 = Vector::Zero(cx.cols()), s2 = Vector::Zero(cx.cols());
    Eigen::Index n1 = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (z[static_cast<std::size_t>(i)]) {
        s1 += cx.row(i).transpose();
        ++n1;
      } else {
        s2 += cx.row(i).transpose();
      }
    }
    if (n1 == 0 || n1 == n) {
      out.converged = true;
      break;
    }
    const Vector u1 = s1 / static_cast<double>(n1);
    const Vector u2 = s2 / static_cast<double>(n - n1);
    const double bias = u1.dot(f * u1) - u2.dot(f * u2);
    const Vector fe = f * (u1 - u2);
    for (Eigen::Index i = 0; i < n; ++i) {
      z[static_cast<std::size_t>(i)] = bias - 2.0 * cx.row(i).dot(fe) < 0.0 ? 1 : 0;
    }
    if (z == last) {
      out.converged = true;
      break;
    }
  }
  return out;
}

// Two-component versus one-component statistic of a fixed split.
double split_statistic(const Matrix& cx, const ScanGlobalModel& model, const Matrix& f, const std::vector<int>& z) {
  const Eigen::Index n = cx.rows();
  Vector s1 = Vector::Zero(cx.cols()), s2 = Vector::Zero(cx.cols());
  Eigen::Index n1 = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (z[static_cast<std::size_t>(i)]) {
      s1 += cx.row(i).transpose();
      ++n1;
    } else {
      s2 += cx.row(i).transpose();
    }
  }
  const Vector u1 = n1 > 0 ? Vector(s1 / static_cast<double>(n1)) : Vector(Vector::Zero(cx.cols()));
  const Vector u2 = n - n1 > 0 ? Vector(s2 / static_cast<double>(n - n1)) : Vector(Vector::Zero(cx.cols()));

  // Posterior identity of a single-component class, as in the global E-step.
  const Matrix g = -symmetric_pinv(static_cast<double>(n) * model.identity_cov + model.variation_cov) *
                   model.identity_cov * f;
  const Vector mu = -(model.variation_cov * g) * cx.colwise().sum().transpose();
  const double mfm = mu.dot(f * mu);
  const double b1 = mfm - u1.dot(f * u1);
  const double b2 = mfm - u2.dot(f * u2);
  double sc = static_cast<double>(n1) * b1 + static_cast<double>(n - n1) * b2;
  const Vector fe1 = f * (mu - u1);
  const Vector fe2 = f * (mu - u2);
  for (Eigen::Index i = 0; i < n; ++i) {
    sc -= 2.0 * cx.row(i).dot(z[static_cast<std::size_t>(i)] ? fe1 : fe2);
  }
  return sc / static_cast<double>(n);
}

}  // namespace

ScanClassStatistic scan_class_statistic(const Matrix& cx, const ScanGlobalModel& model, std::uint64_t seed,
                                        int max_iterations, int restarts) {
  ScanClassStatistic out;
  if (cx.rows() == 0) {
    out.converged = true;
    return out;
  }
  const Matrix f = symmetric_pinv(model.variation_cov);
  Rng rng(seed, "scan-split");
  bool have = false;
  for (int r = 0; r < std::max(1, restarts); ++r) {
    Split split = find_split(cx, f, rng, max_iterations);
    const double st = split_statistic(cx, model, f, split.assignment);
    if (!have || st > out.statistic) {
      have = true;
      out.statistic = st;
      out.split = std::move(split.assignment);
      out.converged = split.converged;
    }
  }
  return out;
}

CleanseResult scan(const Matrix& latents, std::span<const int> labels, const Matrix& clean_base,
                   std::span<const int> clean_base_labels, const ScanOptions& opt) {
  if (clean_base.rows() == 0) throw InvalidInput("SCAn needs a clean base set");
  if (clean_base.cols() != latents.cols()) throw InvalidInput("clean base and latents differ in dimension");
  if (static_cast<std::size_t>(latents.rows()) != labels.size()) throw InvalidInput("label count mismatch");

  CleanseResult res;
  res.method = "scan";
  res.parameters = {{"threshold", opt.threshold},
                    {"global_em_iterations", static_cast<double>(opt.global_em_iterations)},
                    {"split_em_iterations", static_cast<double>(opt.split_em_iterations)},
                    {"split_restarts", static_cast<double>(opt.split_restarts)},
                    {"clean_base_size", static_cast<double>(clean_base.rows())}};
  if (opt.pca_dim) res.parameters["pca_dim"] = *opt.pca_dim;

  const std::size_t n_inspect = labels.size();
  Matrix all(latents.rows() + clean_base.rows(), latents.cols());
  all << latents, clean_base;
  std::vector<int> all_labels(labels.begin(), labels.end());
  all_labels.insert(all_labels.end(), clean_base_labels.begin(), clean_base_labels.end());
  int num_classes = 0;
  for (int y : all_labels) num_classes = std::max(num_classes, y + 1);

  Matrix base = clean_base;
  if (opt.pca_dim && *opt.pca_dim < all.cols()) {
    PcaModel pca = fit_pca(all, *opt.pca_dim);
    all = pca.transform(all);
    base = pca.transform(clean_base);
  }

  ScanGlobalModel global = scan_global_model(base, clean_base_labels, num_classes, opt.global_em_iterations,
                                             opt.tolerance);
  if (!global.converged) log_warn("SCAn global model stopped at the iteration cap");

  const Matrix x = center_rows(all);
  std::map<int, std::vector<std::size_t>> rows = rows_by_class(x, all_labels);
  std::vector<int> classes;
  std::vector<double> stats;
  std::map<int, ScanClassStatistic> splits;
  for (const auto& [label, idx] : rows) {
    ScanClassStatistic st = scan_class_statistic(select_rows(x, idx), global,
                                                 derive_seed(opt.seed, "scan-class-" + std::to_string(label)),
                                                 opt.split_em_iterations, opt.split_restarts);
    if (!st.converged) res.low_confidence_classes.insert(label);
    classes.push_back(label);
    stats.push_back(st.statistic);
    splits.emplace(label, std::move(st));
  }

  const std::vector<double> index = mad_anomaly_indices(stats);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const int label = classes[c];
    res.per_class_scores[label] = index[c];
    if (!(index[c] > opt.threshold)) continue;
    res.flagged_classes.insert(label);

    const auto& idx = rows.at(label);
    const auto& split = splits.at(label).split;
    std::array<std::size_t, 2> base_members{}, inspected_members{};
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto& bucket = idx[r] >= n_inspect ? base_members : inspected_members;
      ++bucket[static_cast<std::size_t>(split[r])];
    }
    // The component holding fewer clean-base samples is the poison candidate;
    // without a difference, the minority component of the inspected rows.
    int suspect;
    if (base_members[0] != base_members[1]) {
      suspect = base_members[0] < base_members[1] ? 0 : 1;
    } else {
      suspect = inspected_members[0] < inspected_members[1] ? 0 : 1;
    }
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < n_inspect && split[r] == suspect) res.suspected_indices.push_back(idx[r]);
    }
  }
  res.finalize();
  return res;
}

Vector que_scores(const Matrix& reps, double trim_fraction, const SpectreOptions& opt) {
  const Eigen::Index n = reps.rows();
  const Eigen::Index d = reps.cols();
  if (n <= d) throw InvalidInput("QUE scoring needs more rows than dimensions");

  // Robust location/scatter by concentration steps on the h most central rows.
  const auto keep = static_cast<Eigen::Index>(
      std::clamp<double>(std::ceil((1.0 - trim_fraction) * static_cast<double>(n)), static_cast<double>(d + 1),
                         static_cast<double>(n)));
  std::vector<std::size_t> subset(static_cast<std::size_t>(n));
  std::iota(subset.begin(), subset.end(), 0);
  Vector mu;
  Matrix sigma;
  auto regularise = [&](Matrix s) {
    const double ridge = opt.ridge * std::max(s.trace() / static_cast<double>(d), 1e-12);
    s.diagonal().array() += ridge;
    return s;
  };
  for (int it = 0; it <= opt.robust_iterations; ++it) {
    Matrix sub = select_rows(reps, subset);
    mu = row_mean(sub);
    sigma = regularise(covariance(sub));
    if (it == opt.robust_iterations) break;
    const Matrix prec = symmetric_pinv(sigma);
    const Matrix c = reps.rowwise() - mu.transpose();
    const Vector maha = ((c * prec).array() * c.array()).rowwise().sum();
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return maha(static_cast<Eigen::Index>(a)) < maha(static_cast<Eigen::Index>(b));
    });
    order.resize(static_cast<std::size_t>(keep));
    std::sort(order.begin(), order.end());
    if (order == subset) break;
    subset = std::move(order);
  }

  const Matrix y = (reps.rowwise() - mu.transpose()) * symmetric_inv_sqrt(sigma);
  const Matrix s = (y.transpose() * y) / static_cast<double>(n);
  const double norm = symmetric_eigen(s).values(0);
  const double denom = std::max(norm - 1.0, 1e-6);
  const Matrix q = symmetric_expm(opt.que_alpha * (s - Matrix::Identity(d, d)) / denom);
  const Matrix qn = q / q.trace();
  return ((y * qn).array() * y.array()).rowwise().sum();
}

CleanseResult spectre(const Matrix& latents, std::span<const int> labels, double payload_rate,
                      const SpectreOptions& opt) {
  CleanseResult res;
  res.method = "spectre";
  res.parameters = {{"payload_rate", payload_rate},
                    {"budget_multiplier", 1.5},
                    {"pca_dim", static_cast<double>(opt.pca_dim)},
                    {"que_alpha", opt.que_alpha},
                    {"robust_iterations", static_cast<double>(opt.robust_iterations)},
                    {"ridge", opt.ridge}};
  const auto by_class = rows_by_class(latents, labels);
  const std::size_t budget = round_half_up(1.5 * payload_rate * static_cast<double>(labels.size()));
  res.parameters["budget"] = static_cast<double>(budget);

  int best_class = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  std::map<int, Vector> scores;
  for (const auto& [label, rows] : by_class) {
    Matrix x = select_rows(latents, rows);
    const int dim = std::min<int>(opt.pca_dim, static_cast<int>(x.cols()));
    if (static_cast<Eigen::Index>(rows.size()) <= dim) {
      throw InvalidInput("SPECTRE: class " + std::to_string(label) + " has " + std::to_string(rows.size()) +
                         " samples, needs more than " + std::to_string(dim));
    }
    Matrix z = fit_pca(x, dim).transform(x);
    const double trim = std::min(0.5, static_cast<double>(budget) / static_cast<double>(rows.size()));
    Vector tau = que_scores(z, trim, opt);
    const std::size_t top = std::max<std::size_t>(1, std::min(budget, rows.size()));
    double magnitude = 0.0;
    for (std::size_t r : top_k(tau, top)) magnitude += tau(static_cast<Eigen::Index>(r));
    magnitude /= static_cast<double>(top);
    res.per_class_scores[label] = magnitude;
    if (magnitude > best_score) {
      best_score = magnitude;
      best_class = label;
    }
    scores.emplace(label, std::move(tau));
  }
  if (best_class < 0 || budget == 0) return res;

  res.flagged_classes.insert(best_class);
  const auto& rows = by_class.at(best_class);
  for (std::size_t r : top_k(scores.at(best_class), budget)) res.suspected_indices.push_back(rows[r]);
  res.finalize();
  return res;
}

ClassLatents synth_latents(std::size_t n_clean, std::size_t n_poison, int dim, double separation,
                           std::uint64_t seed) {
  if (dim < 2) throw InvalidInput("synthetic latents need dim >= 2");
  Rng rng(seed, "synth-latents");
  Vector u(dim);
  for (int j = 0; j < dim; ++j) u(j) = rng.normal();
  u.normalize();

  ClassLatents cl;
  cl.label = 0;
  const std::size_t n = n_clean + n_poison;
  cl.reps.resize(static_cast<Eigen::Index>(n), dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < dim; ++j) cl.reps(static_cast<Eigen::Index>(i), j) = rng.normal();
    if (i >= n_clean) cl.reps.row(static_cast<Eigen::Index>(i)) += separation * u.transpose();
    cl.roles.push_back(i >= n_clean ? Role::payload : Role::clean);
    cl.indices.push_back(i);
  }
  return cl;
}

SynthDataset synth_multiclass_latents(int num_classes, std::size_t n_per_class, std::size_t n_poison, int dim,
                                      double separation, int poisoned_class, std::size_t base_per_class,
                                      std::uint64_t seed) {
  if (poisoned_class < 0 || poisoned_class >= num_classes) throw InvalidInput("poisoned class out of range");
  Rng rng(seed, "synth-multiclass");
  Matrix means(num_classes, dim);
  for (int k = 0; k < num_classes; ++k) {
    for (int j = 0; j < dim; ++j) means(k, j) = 3.0 * rng.normal();
  }
  Vector u(dim);
  for (int j = 0; j < dim; ++j) u(j) = rng.normal();
  u.normalize();

  SynthDataset out;
  const std::size_t n = static_cast<std::size_t>(num_classes) * n_per_class + n_poison;
  out.latents.resize(static_cast<Eigen::Index>(n), dim);
  std::size_t row = 0;
  auto draw = [&](Matrix& m, std::size_t r, int k) {
    for (int j = 0; j < dim; ++j) m(static_cast<Eigen::Index>(r), j) = means(k, j) + rng.normal();
  };
  for (int k = 0; k < num_classes; ++k) {
    for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
      draw(out.latents, row, k);
      out.labels.push_back(k);
      out.poison.push_back(false);
    }
  }
  for (std::size_t i = 0; i < n_poison; ++i, ++row) {
    draw(out.latents, row, poisoned_class);
    out.latents.row(static_cast<Eigen::Index>(row)) += separation * u.transpose();
    out.labels.push_back(poisoned_class);
    out.poison.push_back(true);
  }
  out.clean_base.resize(static_cast<Eigen::Index>(base_per_class) * num_classes, dim);
  row = 0;
  for (int k = 0; k < num_classes; ++k) {
    for (std::size_t i = 0; i < base_per_class; ++i, ++row) {
      draw(out.clean_base, row, k);
      out.clean_base_labels.push_back(k);
    }
  }
  return out;
}

}  // namespace latsep
