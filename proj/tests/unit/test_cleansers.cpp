#include <doctest.h>

#include <algorithm>
#include <numbers>
#include <set>

#include "latsep/cleansers.hpp"
#include "latsep/log.hpp"
#include "latsep/rng.hpp"

using namespace latsep;

namespace {

std::vector<int> zeros(std::size_t n) { return std::vector<int>(n, 0); }

std::set<std::size_t> payload_rows(const ClassLatents& cl) {
  std::set<std::size_t> s;
  for (std::size_t i = 0; i < cl.size(); ++i)
    if (cl.roles[i] == Role::payload) s.insert(i);
  return s;
}

double recall(const std::vector<std::size_t>& suspected, const std::vector<bool>& poison) {
  std::size_t hit = 0, total = 0;
  for (bool p : poison) total += p;
  for (std::size_t i : suspected) hit += poison[i];
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

// Top right singular vector by power iteration on C^T C, independent of the SVD used by the cleanser.
Vector power_top_direction(const Matrix& c) {
  Vector v = Vector::Ones(c.cols()).normalized();
  for (int it = 0; it < 500; ++it) v = (c.transpose() * (c * v)).normalized();
  return v;
}

}  // namespace

TEST_CASE("spectral signature ranks shifted rows first") {
  Rng r(1);
  Matrix x(110, 64);
  for (int i = 0; i < 110; ++i)
    for (int j = 0; j < 64; ++j) x(i, j) = r.normal();
  for (int i = 100; i < 110; ++i) x(i, 5) += 10.0;

  // Oracle: scores against the power-iteration direction.
  const Matrix c = x.rowwise() - x.colwise().mean();
  const Vector v = power_top_direction(c);
  Vector oracle = (c * v).array().square();
  std::vector<int> order(110);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return oracle(a) > oracle(b); });
  std::set<int> top10(order.begin(), order.begin() + 10);
  for (int i = 100; i < 110; ++i) CHECK(top10.count(i));

  const double rate = 10.0 / (1.5 * 110.0);
  const auto res = spectral_signature(x, zeros(110), rate);
  REQUIRE(res.suspected_indices.size() == 10);
  for (std::size_t k = 0; k < 10; ++k) CHECK(res.suspected_indices[k] == 100 + k);
}

TEST_CASE("spectral signature budget is round-half-up per class") {
  const auto cl = synth_latents(5000, 0, 16, 0.0, 2);
  const auto res = spectral_signature(cl.reps, zeros(5000), 0.005);
  CHECK(res.suspected_indices.size() == 38);

  std::vector<int> labels(5000);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i < 1000 ? 0 : 1;
  const auto two = spectral_signature(cl.reps, labels, 0.005);
  CHECK(two.suspected_indices.size() == 8 + 30);
}

TEST_CASE("spectral signature skips rank-zero classes") {
  set_log_level(LogLevel::error);
  Matrix x = Matrix::Zero(20, 4);
  const auto res = spectral_signature(x, zeros(20), 0.1);
  CHECK(res.suspected_indices.empty());
  CHECK(res.flagged_classes.empty());
  set_log_level(LogLevel::warn);
}

TEST_CASE("activation clustering flags two equal clusters") {
  const auto cl = synth_latents(200, 200, 64, 10.0, 3);
  const auto res = activation_clustering(cl.reps, zeros(400));
  CHECK(res.per_class_scores.at(0) > 0.15);
  CHECK(res.flagged_classes.count(0));
  REQUIRE(res.suspected_indices.size() == 200);
  // Tie: the cluster without row 0 (a clean row) is suspected, i.e. the shifted half.
  CHECK(res.suspected_indices.front() == 200);
}

TEST_CASE("activation clustering leaves a single gaussian alone") {
  // sklearn oracle (tests/oracles/latent_oracles.py): homogeneous N(0, I64), n=1050,
  // PCA10 + 2-means silhouette in [0.069, 0.076].
  int flagged = 0;
  for (int t = 0; t < 100; ++t) {
    const auto cl = synth_latents(1050, 0, 64, 0.0, 100 + t);
    ActivationClusteringOptions opt;
    opt.seed = t;
    const auto res = activation_clustering(cl.reps, zeros(1050), opt);
    CHECK(res.per_class_scores.at(0) < 0.15);
    flagged += static_cast<int>(res.flagged_classes.size());
  }
  CHECK(flagged == 0);
}

TEST_CASE("activation clustering small-cluster variant") {
  const auto cl = synth_latents(900, 100, 64, 10.0, 4);
  ActivationClusteringOptions opt;
  opt.min_cluster_fraction = 0.35;
  const auto res = activation_clustering(cl.reps, zeros(1000), opt);
  CHECK(res.flagged_classes.count(0));
  CHECK(res.suspected_indices.size() == 100);
  const auto homo = synth_latents(1000, 0, 64, 0.0, 5);
  CHECK(activation_clustering(homo.reps, zeros(1000), opt).flagged_classes.empty());
}

TEST_CASE("scan separates a planted cluster from clean classes") {
  const auto ds = synth_multiclass_latents(10, 500, 25, 64, 10.0, 0, 200, 7);
  const auto res = scan(ds.latents, ds.labels, ds.clean_base, ds.clean_base_labels);
  CHECK(res.per_class_scores.at(0) > std::numbers::e);
  CHECK(res.flagged_classes.count(0));
  CHECK(recall(res.suspected_indices, ds.poison) == 1.0);
}

TEST_CASE("scan on a 30% minority at 10 sigma") {
  const auto ds = synth_multiclass_latents(10, 350, 150, 64, 10.0, 3, 200, 8);
  const auto res = scan(ds.latents, ds.labels, ds.clean_base, ds.clean_base_labels);
  CHECK(res.per_class_scores.at(3) > std::numbers::e);
  std::size_t in_class = 0, hits = 0;
  for (std::size_t i : res.suspected_indices) {
    in_class += ds.labels[i] == 3;
    hits += ds.poison[i];
  }
  CHECK(hits == 150);
  CHECK(in_class >= 150);
}

TEST_CASE("scan stays quiet on homogeneous classes") {
  int below = 0;
  for (int t = 0; t < 100; ++t) {
    const auto ds = synth_multiclass_latents(10, 500, 25, 64, 0.0, 0, 200, 300 + t);
    ScanOptions opt;
    opt.seed = t;
    const auto res = scan(ds.latents, ds.labels, ds.clean_base, ds.clean_base_labels, opt);
    below += res.per_class_scores.at(0) < std::numbers::e;
  }
  CHECK(below >= 95);
}

TEST_CASE("scan global model recovers identity and variation covariances") {
  Rng r(9);
  const int classes = 40, per = 100, d = 3;
  Matrix x(classes * per, d);
  std::vector<int> y;
  for (int k = 0; k < classes; ++k) {
    Vector mu(d);
    for (int j = 0; j < d; ++j) mu(j) = 2.0 * r.normal();
    for (int i = 0; i < per; ++i) {
      for (int j = 0; j < d; ++j) x(k * per + i, j) = mu(j) + 0.5 * r.normal();
      y.push_back(k);
    }
  }
  const auto g = scan_global_model(x, y, classes);
  CHECK(g.converged);
  for (int j = 0; j < d; ++j) {
    CHECK(g.variation_cov(j, j) == doctest::Approx(0.25).epsilon(0.1));
    CHECK(g.identity_cov(j, j) == doctest::Approx(4.0).epsilon(0.5));
  }
}

TEST_CASE("spectre finds the planted class") {
  const auto ds = synth_multiclass_latents(10, 500, 25, 64, 10.0, 4, 0, 10);
  const double rate = 25.0 / static_cast<double>(ds.labels.size());
  const auto res = spectre(ds.latents, ds.labels, rate);
  CHECK(res.flagged_classes == std::set<int>{4});
  CHECK(recall(res.suspected_indices, ds.poison) >= 0.9);
  CHECK(res.suspected_indices.size() == round_half_up(1.5 * rate * static_cast<double>(ds.labels.size())));
}

TEST_CASE("spectre always selects exactly one class") {
  const auto ds = synth_multiclass_latents(10, 300, 0, 32, 0.0, 0, 0, 11);
  const auto res = spectre(ds.latents, ds.labels, 0.005);
  CHECK(res.flagged_classes.size() == 1);
  CHECK(res.suspected_indices.size() == round_half_up(1.5 * 0.005 * 3000));
}

TEST_CASE("cleansers are equivariant under class relabelling") {
  const auto ds = synth_multiclass_latents(5, 300, 20, 32, 10.0, 2, 100, 12);
  const std::vector<int> perm{3, 0, 4, 1, 2};
  std::vector<int> relabel, base_relabel;
  for (int y : ds.labels) relabel.push_back(perm[static_cast<std::size_t>(y)]);
  for (int y : ds.clean_base_labels) base_relabel.push_back(perm[static_cast<std::size_t>(y)]);
  auto mapped = [&](const std::set<int>& s) {
    std::set<int> out;
    for (int c : s) out.insert(perm[static_cast<std::size_t>(c)]);
    return out;
  };
  const double rate = 20.0 / static_cast<double>(ds.labels.size());
  CHECK(mapped(spectre(ds.latents, ds.labels, rate).flagged_classes) ==
        spectre(ds.latents, relabel, rate).flagged_classes);
  CHECK(mapped(spectral_signature(ds.latents, ds.labels, rate).flagged_classes) ==
        spectral_signature(ds.latents, relabel, rate).flagged_classes);
  CHECK(mapped(scan(ds.latents, ds.labels, ds.clean_base, ds.clean_base_labels).flagged_classes) ==
        scan(ds.latents, relabel, ds.clean_base, base_relabel).flagged_classes);
}

TEST_CASE("cleansers are deterministic") {
  const auto ds = synth_multiclass_latents(4, 200, 15, 16, 8.0, 1, 80, 13);
  CHECK(activation_clustering(ds.latents, ds.labels) == activation_clustering(ds.latents, ds.labels));
  CHECK(scan(ds.latents, ds.labels, ds.clean_base, ds.clean_base_labels) ==
        scan(ds.latents, ds.labels, ds.clean_base, ds.clean_base_labels));
  CHECK(spectre(ds.latents, ds.labels, 0.02) == spectre(ds.latents, ds.labels, 0.02));
}

TEST_CASE("synthetic latents") {
  const auto none = synth_latents(30, 0, 4, 10.0, 1);
  CHECK(none.poison_count() == 0);
  const auto cl = synth_latents(100, 20, 64, 10.0, 2);
  CHECK(payload_rows(cl).size() == 20);
  CHECK(cl.reps.rows() == 120);
  // Oracle: a separator along the mean difference classifies perfectly.
  Vector mp = Vector::Zero(64), mc = Vector::Zero(64);
  for (std::size_t i = 0; i < cl.size(); ++i)
    (cl.roles[i] == Role::payload ? mp : mc) += cl.reps.row(static_cast<Eigen::Index>(i)).transpose();
  mp /= 20;
  mc /= 100;
  const Vector w = mp - mc;
  const double b = -w.dot(mp + mc) / 2;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < cl.size(); ++i)
    correct += (cl.reps.row(static_cast<Eigen::Index>(i)).dot(w) + b > 0) == (cl.roles[i] == Role::payload);
  CHECK(correct == 120);
  CHECK_THROWS(synth_latents(10, 1, 1, 1.0, 1));
}
