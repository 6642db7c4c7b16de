#include <doctest.h>

#include <cmath>
#include <limits>

#include "bricklayer/numerics.hpp"

using namespace bricklayer;

TEST_SUITE("numerics") {

TEST_CASE("cosine similarity examples") {
  const Vector e1{1, 0}, e2{0, 1}, d{1, 1};
  CHECK(cosine_similarity(e1, e1) == 1.0);
  CHECK(cosine_similarity(e1, e2) == 0.0);
  CHECK(cosine_similarity(d, e1) == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-15));
}

TEST_CASE("cosine similarity rejects zero vectors") {
  const Vector z{0, 0}, a{1, 2};
  CHECK_THROWS_AS(cosine_similarity(z, a), Error);
  try {
    cosine_similarity(a, z);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroNormVector);
  }
}

TEST_CASE("cosine similarity properties on random vectors") {
  RngStream rng(11);
  for (int k = 0; k < 200; ++k) {
    Vector a(5), b(5);
    for (auto& x : a) x = rng.normal();
    for (auto& x : b) x = rng.normal();
    CHECK(std::abs(cosine_similarity(a, a) - 1.0) < 1e-12);
    CHECK(cosine_similarity(a, b) == cosine_similarity(b, a));
    Vector sa = a;
    const double s = rng.uniform(0.01, 100.0);
    for (auto& x : sa) x *= s;
    CHECK(std::abs(cosine_similarity(sa, b) - cosine_similarity(a, b)) < 1e-12);
    const double c = cosine_similarity(a, b);
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
  }
}

TEST_CASE("l2_normalize examples") {
  CHECK(l2_normalize(Vector{3, 4}) == Vector{0.6, 0.8});
  CHECK(l2_normalize(Vector{0, -2}) == Vector{0, -1});
  CHECK(l2_normalize(Vector{1, 1, 1, 1}) == Vector{0.5, 0.5, 0.5, 0.5});
  CHECK_THROWS_AS(l2_normalize(Vector{0, 0}), Error);
}

TEST_CASE("l2_normalize is unit norm and idempotent") {
  RngStream rng(5);
  for (int k = 0; k < 200; ++k) {
    Vector a(7);
    for (auto& x : a) x = rng.normal() * 10;
    const Vector n1 = l2_normalize(a);
    CHECK(std::abs(l2_norm(n1) - 1.0) < 1e-12);
    const Vector n2 = l2_normalize(n1);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(n2[i] - n1[i]) <= 2 * std::numeric_limits<double>::epsilon());
  }
}

TEST_CASE("finite_diff_grad examples") {
  const Vector x{1, 2};
  const auto sq = [](std::span<const double> v) { return dot(v, v); };
  const Vector g = finite_diff_grad(sq, x, 1e-5);
  CHECK(std::abs(g[0] - 2) < 1e-6);
  CHECK(std::abs(g[1] - 4) < 1e-6);

  const Vector c = finite_diff_grad([](std::span<const double>) { return 3.5; }, x, 1e-5);
  CHECK(c == Vector{0, 0});

  const Vector z = finite_diff_grad(sq, Vector{0, 0}, 1e-5);
  CHECK(z == Vector{0, 0});
}

TEST_CASE("finite_diff_grad flags non-finite probes") {
  const auto bad = [](std::span<const double> v) { return v[0] > 0 ? std::log(-1.0) : 0.0; };
  try {
    finite_diff_grad(bad, Vector{0.0}, 1e-3);
    FAIL("expected NonFiniteEvaluation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteEvaluation);
  }
}

TEST_CASE("rng streams are deterministic and splittable") {
  RngStream a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  const RngStream root(9);
  RngStream s1 = root.split("x"), s2 = root.split("x"), s3 = root.split("y"), s4 = root.split("x", 1);
  const auto v1 = s1.next_u64();
  CHECK(v1 == s2.next_u64());
  CHECK(v1 != s3.next_u64());
  CHECK(v1 != s4.next_u64());
  // Splitting never advances the parent.
  CHECK(root == RngStream(9));
}

TEST_CASE("rng draws stay in range and look uniform") {
  RngStream rng(77);
  double sum = 0.0, sq = 0.0;
  std::vector<int> counts(6, 0);
  constexpr int n = 60000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    ++counts[rng.uniform_index(6)];
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(std::abs(sq / n - 1.0) < 0.03);
  for (int c : counts) CHECK(std::abs(c - n / 6) < 500);
}

TEST_CASE("permutation is a permutation") {
  RngStream rng(3);
  auto p = rng.permutation(50);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == i);
}

TEST_CASE("matrix helpers") {
  Matrix m = Matrix::from_rows({{1, 2}, {3, 4}, {5, 6}});
  CHECK(m.rows() == 3);
  CHECK(m.cols() == 2);
  CHECK(m(2, 1) == 6);
  m.append_row(Vector{7, 8});
  CHECK(m.row_vector(3) == Vector{7, 8});
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 2, 3}) == 2.5);
  CHECK(softplus(1000.0) == 1000.0);
  CHECK(logistic(0.0) == 0.5);
}

}  // TEST_SUITE
