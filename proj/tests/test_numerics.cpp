#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "milpdl/grad_check.hpp"
#include "milpdl/matrix.hpp"
#include "milpdl/rng.hpp"

using namespace milpdl;

TEST_CASE("matmul identity and hand-computed cases") {
  Matrix id(2, 2, {1, 0, 0, 1});
  Matrix b(2, 2, {3, 4, 5, 6});
  Matrix c = matmul(id, b);
  for (std::size_t i = 0; i < 4; ++i) CHECK(c.data()[i] == b.data()[i]);

  Matrix row(1, 2, {1, 2});
  Matrix col(2, 1, {3, 4});
  CHECK(matmul(row, col)(0, 0) == 11.0);
}

TEST_CASE("matmul matches triple-loop oracle on random matrices") {
  Rng rng(17);
  Matrix a(5, 7), b(7, 3);
  for (double& v : a.data()) v = rng.gaussian();
  for (double& v : b.data()) v = rng.gaussian();
  Matrix c = matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 7; ++k) s += a(i, k) * b(k, j);
      CHECK(std::abs(c(i, j) - s) < 1e-12);
    }
}

TEST_CASE("matmul rejects dimension mismatch") {
  Matrix a(2, 3), b(2, 2);
  CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
}

TEST_CASE("matmul_nt and matmul_tn agree with plain matmul") {
  Rng rng(23);
  Matrix a(4, 6), b(5, 6), c(4, 7);
  for (double& v : a.data()) v = rng.gaussian();
  for (double& v : b.data()) v = rng.gaussian();
  for (double& v : c.data()) v = rng.gaussian();

  Matrix bt(6, 5);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j) bt(j, i) = b(i, j);
  Matrix ref = matmul(a, bt);
  Matrix got = matmul_nt(a, b);
  REQUIRE(got.same_shape(ref));
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(std::abs(got.data()[i] - ref.data()[i]) < 1e-12);

  Matrix at(6, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 6; ++j) at(j, i) = a(i, j);
  Matrix ref2 = matmul(at, c);
  Matrix got2 = matmul_tn(a, c);
  REQUIRE(got2.same_shape(ref2));
  for (std::size_t i = 0; i < got2.size(); ++i)
    CHECK(std::abs(got2.data()[i] - ref2.data()[i]) < 1e-12);
}

TEST_CASE("softmax symmetry, overflow safety and closed form") {
  auto u = stable_softmax({0.0, 0.0, 0.0});
  for (double v : u) CHECK(std::abs(v - 1.0 / 3.0) < 1e-15);

  auto big = stable_softmax({1000.0, 1000.0});
  CHECK(std::abs(big[0] - 0.5) < 1e-15);
  CHECK(std::abs(big[1] - 0.5) < 1e-15);

  const double e = std::exp(1.0);
  auto two = stable_softmax({1.0, 0.0});
  CHECK(std::abs(two[0] - e / (e + 1.0)) < 1e-12);
  CHECK(std::abs(two[1] - 1.0 / (e + 1.0)) < 1e-12);
}

TEST_CASE("softmax properties: positivity, normalization, shift invariance") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.uniform_below(12);
    std::vector<double> x(n);
    for (double& v : x) v = rng.uniform(-30.0, 30.0);
    auto s = stable_softmax(x);
    double sum = 0.0;
    for (double v : s) {
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);

    const double c = rng.uniform(-100.0, 100.0);
    std::vector<double> shifted = x;
    for (double& v : shifted) v += c;
    auto s2 = stable_softmax(shifted);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(s[i] - s2[i]) < 1e-12);

    std::size_t argmax_x = 0, argmax_s = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (x[i] > x[argmax_x]) argmax_x = i;
      if (s[i] > s[argmax_s]) argmax_s = i;
    }
    CHECK(argmax_x == argmax_s);
  }
  CHECK_THROWS_AS(stable_softmax({}), std::invalid_argument);
}

TEST_CASE("rng determinism: same seed, same sequence") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  Rng c(42), d(42);
  for (int i = 0; i < 100; ++i) {
    CHECK(c.uniform01() == d.uniform01());
    CHECK(c.gaussian() == d.gaussian());
    CHECK(c.bernoulli(0.3) == d.bernoulli(0.3));
  }
  std::vector<int> v1(50), v2(50);
  std::iota(v1.begin(), v1.end(), 0);
  std::iota(v2.begin(), v2.end(), 0);
  Rng e(7), f(7);
  e.shuffle(v1);
  f.shuffle(v2);
  CHECK(v1 == v2);
}

TEST_CASE("rng fork streams are label-determined and distinct") {
  Rng root(99);
  Rng f1 = root.fork("alpha");
  root.next_u64();  // advancing the parent must not change fork results
  Rng f2 = root.fork("alpha");
  for (int i = 0; i < 20; ++i) CHECK(f1.next_u64() == f2.next_u64());

  Rng g = root.fork("beta");
  Rng h = root.fork("alpha");
  bool any_diff = false;
  for (int i = 0; i < 20; ++i) any_diff |= (g.next_u64() != h.next_u64());
  CHECK(any_diff);

  CHECK(root.fork("x", 1).seed() != root.fork("x", 2).seed());
}

TEST_CASE("rng gaussian moments are sane") {
  Rng rng(2024);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    sum += g;
    sq += g * g;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("grad_check validates the analytic gradient of x.x") {
  auto f = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  std::vector<double> x{3.0};
  std::vector<double> g{6.0};
  CHECK(grad_check(f, x, g, 1e-5) < 1e-6);
}

TEST_CASE("grad_check flags an injected 10 percent gradient fault") {
  auto f = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  };
  std::vector<double> x{3.0, -2.0};
  std::vector<double> bad{6.0 * 1.1, -4.0};
  CHECK(grad_check(f, x, bad, 1e-5) > 1e-2);
}

TEST_CASE("grad_check input validation") {
  auto f = [](const std::vector<double>& x) { return x[0]; };
  std::vector<double> x{1.0}, g{1.0};
  CHECK_THROWS_AS(grad_check(f, x, g, 1e-3), std::invalid_argument);
  auto bad = [](const std::vector<double>&) {
    return std::numeric_limits<double>::quiet_NaN();
  };
  CHECK_THROWS_AS(grad_check(bad, x, g, 1e-5), std::invalid_argument);
}
