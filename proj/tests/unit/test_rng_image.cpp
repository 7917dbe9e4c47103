#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "latsep/errors.hpp"
#include "latsep/image.hpp"
#include "latsep/rng.hpp"

using namespace latsep;

TEST_CASE("rng streams are deterministic and independent") {
  Rng a(42, "payload-select"), b(42, "payload-select"), c(42, "cover-select");
  bool differs = false;
  for (int i = 0; i < 16; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    differs |= x != c.next();
  }
  CHECK(differs);
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
}

TEST_CASE("uniform_index covers its range without bias towards the edges") {
  Rng r(7);
  std::vector<int> hist(10, 0);
  for (int i = 0; i < 20000; ++i) hist[r.uniform_index(10)]++;
  for (int h : hist) CHECK(h == doctest::Approx(2000).epsilon(0.1));
}

TEST_CASE("uniform and normal draws have the right moments") {
  Rng r(3);
  double su = 0, sn = 0, sn2 = 0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.02));
  CHECK(std::abs(sn / n) < 0.02);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("shuffle is a permutation") {
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  Rng r(11);
  r.shuffle(v.begin(), v.end());
  std::set<int> s(v.begin(), v.end());
  CHECK(s.size() == 100);
  CHECK(!std::is_sorted(v.begin(), v.end()));
}

TEST_CASE("image set storage and subsets") {
  ImageShape shape{2, 3, 3};
  CHECK(shape.size() == 18);
  ImageSet set(shape, 4);
  std::vector<float> img(shape.size());
  for (int k = 0; k < 5; ++k) {
    std::fill(img.begin(), img.end(), 0.1f * k);
    set.push_back(img, k % 4);
  }
  CHECK(set.size() == 5);
  CHECK(set.image(3)[0] == doctest::Approx(0.3f));
  std::vector<std::size_t> pick{4, 1};
  ImageSet sub = set.subset(pick);
  CHECK(sub.size() == 2);
  CHECK(sub.label(0) == 0);
  CHECK(sub.image(1)[5] == doctest::Approx(0.1f));
  CHECK(class_counts(set) == std::vector<std::size_t>{2, 1, 1, 1});
  CHECK_THROWS_AS(set.set_label(0, 9), InvalidInput);
  CHECK_THROWS_AS(set.push_back(std::vector<float>(3), 0), InvalidInput);
}
