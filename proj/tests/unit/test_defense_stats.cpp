#include <doctest.h>

#include <cmath>
#include <limits>

#include "latsep/defense_stats.hpp"
#include "latsep/rng.hpp"

using namespace latsep;

TEST_CASE("anomaly index of the reference norm vector") {
  const std::vector<double> norms{8, 9, 10, 11, 12, 9, 10, 11, 10, 2};
  const auto idx = mad_anomaly_indices(norms);
  // median 10, absolute deviations {2,1,0,1,2,1,0,1,0,8} -> MAD 1, scaled 1.4826.
  CHECK(idx[9] == doctest::Approx(8.0 / 1.4826).epsilon(1e-12));
  CHECK(idx[9] == doctest::Approx(5.396).epsilon(1e-3));
  CHECK(idx[2] == 0.0);
  CHECK(idx[0] == doctest::Approx(2.0 / 1.4826));
  CHECK(select_nc_target(norms, idx) == 9);
}

TEST_CASE("equal norms give zero indices and no target") {
  const std::vector<double> norms(10, 4.0);
  const auto idx = mad_anomaly_indices(norms);
  for (double v : idx) CHECK(v == 0.0);
  CHECK(!select_nc_target(norms, idx));
}

TEST_CASE("anomaly indices are scale invariant") {
  Rng r(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(10), b(10);
    const double k = 0.1 + 10 * r.uniform();
    for (int i = 0; i < 10; ++i) {
      a[i] = 1 + 20 * r.uniform();
      b[i] = k * a[i];
    }
    const auto ia = mad_anomaly_indices(a);
    const auto ib = mad_anomaly_indices(b);
    for (int i = 0; i < 10; ++i) CHECK(ia[i] == doctest::Approx(ib[i]).epsilon(1e-9));
  }
}

TEST_CASE("infinite norms are left out of the median") {
  const double inf = std::numeric_limits<double>::infinity();
  const std::vector<double> norms{8, 9, 10, 11, 12, 9, 10, 11, 10, 2, inf};
  const auto idx = mad_anomaly_indices(norms);
  CHECK(idx[9] == doctest::Approx(8.0 / 1.4826));
  CHECK(idx[10] == 0.0);
  CHECK(select_nc_target(norms, idx) == 9);
}

TEST_CASE("large-norm outliers are never selected") {
  const std::vector<double> norms{10, 10, 11, 9, 10, 30};
  const auto idx = mad_anomaly_indices(norms);
  CHECK(idx[5] > 2.0);
  CHECK(!select_nc_target(norms, idx));
}

TEST_CASE("entropy extremes") {
  const std::vector<float> uniform(10, 0.1f);
  CHECK(shannon_entropy(uniform) == doctest::Approx(std::log(10.0)).epsilon(1e-6));
  std::vector<float> onehot(10, 0.0f);
  onehot[3] = 1.0f;
  CHECK(shannon_entropy(onehot) == 0.0);
}

TEST_CASE("strip threshold and cleanse") {
  std::vector<double> val(100);
  for (int i = 0; i < 100; ++i) val[i] = i;
  CHECK(strip_threshold(val, 0.10) == 10.0);
  const auto res = strip_cleanse(val, val, 0.10);
  CHECK(res.suspected_indices.size() == 10);
  const std::vector<double> high{50, 60, 70};
  CHECK(strip_cleanse(high, val).suspected_indices.empty());
  CHECK_THROWS(strip_threshold(std::vector<double>{}, 0.1));
}

TEST_CASE("strip sacrifice on calibration-distributed data is the false positive rate") {
  Rng r(4);
  const int m = 2000, n = 5000;
  std::vector<double> val(m), train(n);
  for (auto& v : val) v = 1.0 + 0.3 * r.normal();
  for (auto& v : train) v = 1.0 + 0.3 * r.normal();
  const auto res = strip_cleanse(train, val, 0.10);
  const double rate = static_cast<double>(res.suspected_indices.size()) / n;
  // Binomial noise of the train draw plus quantile noise of the threshold.
  const double sigma = std::sqrt(0.1 * 0.9 / n) + std::sqrt(0.1 * 0.9 / m);
  CHECK(std::abs(rate - 0.10) <= 3 * sigma);
}

TEST_CASE("isolation precision") {
  PoisonPlan plan;
  plan.entries = {{2, Role::payload, "t", 0}, {5, Role::cover, "t", 1}, {7, Role::payload, "t", 0}};
  CHECK(isolation_precision(plan, std::vector<std::size_t>{0, 1, 3}) == 0.0);
  CHECK(isolation_precision(plan, std::vector<std::size_t>{2, 5, 7, 9}) == 0.5);
  CHECK(isolation_precision(plan, std::vector<std::size_t>{}) == 0.0);
}
