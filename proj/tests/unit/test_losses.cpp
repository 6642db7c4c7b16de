#include <doctest.h>

#include <cmath>

#include "../oracles/loss_oracle.hpp"
#include "bricklayer/error.hpp"
#include "bricklayer/losses.hpp"

using namespace bricklayer;

namespace {

Matrix random_matrix(RngStream& rng, std::size_t n, std::size_t d) {
  Matrix m(n, d);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

std::vector<std::vector<double>> to_rows(const Matrix& m) {
  std::vector<std::vector<double>> rows;
  for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(m.row_vector(r));
  return rows;
}

double max_rel_error(std::span<const double> analytic, std::span<const double> numeric) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

LossConfig iso_cfg(double tau, bool normalize = true, IsoDenominator den = IsoDenominator::NegativesOnly) {
  LossConfig c;
  c.temperature = tau;
  c.normalize_features = normalize;
  c.denominator = den;
  return c;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("refill endpoints and midpoint") {
  const Vector f1{2, 0}, f2{0, 2}, c{0, 0};
  CHECK(refill_with(f1, f2, c, 1.0, 1.0) == f1);
  CHECK(refill_with(f1, f2, c, 0.3, 0.0) == c);
  CHECK(refill_with(f1, f2, c, 0.5, 0.5) == Vector{0.5, 0.5});
}

TEST_CASE("refill stays inside the triangle") {
  RngStream rng(31);
  const Vector f1{1, 0, 0}, f2{0, 1, 0}, c{0, 0, 1};
  for (int i = 0; i < 1000; ++i) {
    const Refilled r = refill(f1, f2, c, rng);
    const double a = r.beta * r.alpha, b = r.beta * (1 - r.alpha), g = 1 - r.beta;
    CHECK(a >= -1e-12);
    CHECK(b >= -1e-12);
    CHECK(g >= -1e-12);
    // With unit-axis vertices the coordinates are the barycentric weights.
    CHECK(r.feature[0] == doctest::Approx(a).epsilon(1e-12));
    CHECK(r.feature[2] == doctest::Approx(g).epsilon(1e-12));
  }
}

TEST_CASE("refill rejects mixed domains") {
  RngStream rng(1);
  const Vector v{1, 1};
  try {
    refill({1, ClassLabel::Real}, v, {1, ClassLabel::Fake}, v, {1, ClassLabel::Real}, v, rng);
    FAIL("expected DomainMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DomainMismatch);
  }
}

TEST_CASE("isolation on two mirrored pairs") {
  const Matrix f = Matrix::from_rows({{1, 0}, {1, 0}, {-1, 0}, {-1, 0}});
  const std::vector<int> y{0, 0, 1, 1};
  const double expected = oracle::isolation(to_rows(f), y, 1.0, true);
  CHECK(expected == doctest::Approx(std::log(2.0) - 2.0).epsilon(1e-14));
  CHECK(isolation_loss(f, y, iso_cfg(1.0)).value == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("isolation at very high temperature") {
  RngStream rng(3);
  const Matrix f = random_matrix(rng, 6, 3);
  const std::vector<int> y{0, 0, 1, 1, 2, 2};
  const double v = isolation_loss(f, y, iso_cfg(1e6)).value;
  CHECK(v == doctest::Approx(oracle::isolation(to_rows(f), y, 1e6, true)).epsilon(1e-9));
  CHECK(v == doctest::Approx(std::log(4.0)).epsilon(1e-5));
}

TEST_CASE("isolation matches the oracle on random batches") {
  RngStream rng(4);
  for (int inst = 0; inst < 20; ++inst) {
    const Matrix f = random_matrix(rng, 9, 4);
    const std::vector<int> y{0, 1, 2, 0, 1, 2, 0, 1, 5};
    const bool norm = inst % 2 == 0;
    const auto den = inst % 3 == 0 ? IsoDenominator::AllOthers : IsoDenominator::NegativesOnly;
    const auto r = isolation_loss(f, y, iso_cfg(0.5, norm, den));
    CHECK(r.value == doctest::Approx(oracle::isolation(to_rows(f), y, 0.5, norm, den == IsoDenominator::AllOthers))
                         .epsilon(1e-10));
    CHECK(r.skipped_anchors == 1);
    CHECK(r.anchors == 8);
  }
}

TEST_CASE("isolation gradients match finite differences") {
  RngStream rng(5);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t n = 8, d = 3;
    const Matrix f = random_matrix(rng, n, d);
    const std::vector<int> y{0, 0, 1, 1, 2, 2, 0, 1};
    const LossConfig cfg = iso_cfg(0.7, inst % 2 == 0);
    const auto r = isolation_loss(f, y, cfg);
    const Vector numeric = finite_diff_grad(
        [&](std::span<const double> x) {
          return isolation_loss(Matrix(n, d, Vector(x.begin(), x.end())), y, cfg).value;
        },
        f.values(), 1e-5);
    CHECK(max_rel_error(r.feature_grad.values(), numeric) < 1e-4);
  }
}

TEST_CASE("isolation gradients flow through refilled rows") {
  RngStream rng(6);
  const std::size_t n = 6, d = 3;
  const Matrix f = random_matrix(rng, n, d);
  const std::vector<int> y{0, 0, 1, 1, 2, 2};
  const std::vector<RefillSpec> refills{{0, 1, 0.3, 0.8, {0.1, 0.2, -0.1}, 0}, {2, 3, 0.6, 0.4, {0, 1, 0}, 1}};
  const LossConfig cfg = iso_cfg(0.5);
  const auto r = isolation_loss(f, y, refills, cfg);
  const Vector numeric = finite_diff_grad(
      [&](std::span<const double> x) {
        return isolation_loss(Matrix(n, d, Vector(x.begin(), x.end())), y, refills, cfg).value;
      },
      f.values(), 1e-5);
  CHECK(max_rel_error(r.feature_grad.values(), numeric) < 1e-4);
}

TEST_CASE("isolation invariances") {
  RngStream rng(7);
  const Matrix f = random_matrix(rng, 7, 4);
  const std::vector<int> y{3, 3, 1, 1, 1, 8, 8};
  const double base = isolation_loss(f, y, iso_cfg(0.2)).value;

  const std::vector<std::size_t> perm{4, 0, 6, 2, 5, 1, 3};
  Matrix pf(7, 4);
  std::vector<int> py(7);
  for (std::size_t i = 0; i < 7; ++i) {
    std::copy(f.row(perm[i]).begin(), f.row(perm[i]).end(), pf.row(i).begin());
    py[i] = y[perm[i]];
  }
  CHECK(isolation_loss(pf, py, iso_cfg(0.2)).value == doctest::Approx(base).epsilon(1e-12));

  std::vector<int> relabeled;
  for (int v : y) relabeled.push_back(v == 3 ? 0 : v == 1 ? 8 : 3);
  CHECK(isolation_loss(f, relabeled, iso_cfg(0.2)).value == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("normalized isolation is bounded by the temperature") {
  RngStream rng(8);
  for (double tau : {0.1, 0.5, 2.0}) {
    const Matrix f = random_matrix(rng, 10, 3);
    const std::vector<int> y{0, 0, 0, 1, 1, 1, 2, 2, 3, 3};
    const double v = isolation_loss(f, y, iso_cfg(tau)).value;
    // Per anchor: -mean(pos)/τ + log Σ_neg ∈ [log|N| - 2/τ, log|N| + 2/τ].
    CHECK(v >= std::log(5.0) - 2.0 / tau - 1e-12);
    CHECK(v <= std::log(9.0) + 2.0 / tau + 1e-12);
  }
}

TEST_CASE("isolation with one domain contributes nothing") {
  const Matrix f = Matrix::from_rows({{1, 0}, {0, 1}, {1, 1}});
  const auto r = isolation_loss(f, std::vector<int>{2, 2, 2}, iso_cfg(0.1));
  CHECK(r.no_negatives);
  CHECK(r.value == 0.0);
}

TEST_CASE("distillation values") {
  const Matrix cur = Matrix::from_rows({{3}});
  const Matrix old = Matrix::from_rows({{1}});
  CHECK(distillation_loss(cur, old, std::vector<int>{1}).value == 4.0);
  CHECK(distillation_loss(cur, cur, std::vector<int>{1}).value == 0.0);
  const auto none = distillation_loss(cur, old, std::vector<int>{0});
  CHECK(none.no_replay);
  CHECK(none.value == 0.0);

  // Two tasks: per-task means are summed.
  const Matrix c2 = Matrix::from_rows({{1}, {3}, {2}, {0}});
  const Matrix o2 = Matrix::from_rows({{0}, {0}, {0}, {0}});
  CHECK(distillation_loss(c2, o2, std::vector<int>{1, 1, 2, 0}).value == doctest::Approx(5.0 + 4.0));
}

TEST_CASE("distillation gradients reach only the current extractor") {
  RngStream rng(9);
  const auto prev = snapshot(BackboneParams::init({5, {4}, 3}, rng.split("prev")));
  const BackboneParams cur = BackboneParams::init({5, {4}, 3}, rng.split("cur"));
  const Matrix x = random_matrix(rng, 6, 5);
  const std::vector<int> ids{1, 1, 2, 2, 2, 1};
  const auto r = distillation_loss(cur, prev, x, ids);
  const Vector numeric = finite_diff_grad(
      [&](std::span<const double> v) {
        BackboneParams p = cur;
        std::copy(v.begin(), v.end(), p.values().begin());
        return distillation_loss(p, prev, x, ids).value;
      },
      cur.values(), 1e-5);
  CHECK(max_rel_error(r.grads.values(), numeric) < 1e-4);
  CHECK(distillation_loss(prev.params(), prev, x, ids).value == 0.0);
}

TEST_CASE("detection at zero logits is ln 2 per task") {
  HeadBank bank({TaskHead{1, Vector{0, 0}, 0.0, false}});
  const Matrix f = Matrix::from_rows({{1, 2}, {3, 4}, {-1, 0}});
  CHECK(detection_loss(bank, f, std::vector<int>{0, 1, 1}, std::vector<int>{1, 1, 1}).value ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("saturated correct logits drive detection to zero") {
  HeadBank bank({TaskHead{1, Vector{50.0}, 0.0, false}});
  const Matrix f = Matrix::from_rows({{1}, {-1}});
  CHECK(detection_loss(bank, f, std::vector<int>{1, 0}, std::vector<int>{1, 1}).value < 1e-20);
}

TEST_CASE("detection matches the oracle and leaves frozen heads untouched") {
  RngStream rng(10);
  HeadBank bank({TaskHead{1, Vector{0.5, -1.0, 0.2}, 0.3, true}, TaskHead{2, Vector{-0.4, 0.7, 1.1}, -0.2, false}});
  const Matrix f = random_matrix(rng, 7, 3);
  const std::vector<int> y{1, 0, 1, 1, 0, 0, 1};
  const std::vector<int> t{1, 1, 2, 2, 2, 1, 2};
  std::vector<double> logits;
  for (std::size_t i = 0; i < 7; ++i) logits.push_back(head_logit(bank.head(t[i]), f.row(i)));
  const auto r = detection_loss(bank, f, y, t);
  CHECK(r.value == doctest::Approx(oracle::detection(logits, y, t)).epsilon(1e-10));

  const Vector numeric = finite_diff_grad(
      [&](std::span<const double> x) { return detection_loss(bank, Matrix(7, 3, Vector(x.begin(), x.end())), y, t).value; },
      f.values(), 1e-5);
  CHECK(max_rel_error(r.feature_grad.values(), numeric) < 1e-4);

  // The head gradient only sees rows routed to the trainable task-2 head.
  Vector w_grad(3, 0.0);
  for (std::size_t i = 0; i < 7; ++i) {
    if (t[i] != 2) continue;
    const double dz = (logistic(logits[i]) - y[i]) / 4.0;
    for (std::size_t k = 0; k < 3; ++k) w_grad[k] += dz * f(i, k);
  }
  for (std::size_t k = 0; k < 3; ++k) CHECK(r.head_w_grad[k] == doctest::Approx(w_grad[k]).epsilon(1e-12));
}

TEST_CASE("detection rejects unknown heads") {
  HeadBank bank({TaskHead{1, Vector{1.0}, 0.0, false}});
  try {
    detection_loss(bank, Matrix::from_rows({{1}}), std::vector<int>{1}, std::vector<int>{3});
    FAIL("expected MissingHead");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingHead);
  }
}

TEST_CASE("overall loss weighting") {
  LossConfig cfg;
  LossPart iso{2.0, Matrix(1, 1, 0.5)};
  LossPart dis{1.0, Matrix(1, 1, -0.25)};
  DetectionResult det;
  det.value = 3.0;
  det.feature_grad = Matrix(1, 1, 2.0);
  det.head_w_grad = Vector{1.0};
  det.head_b_grad = 4.0;
  const auto all = overall_loss(cfg, &iso, &dis, &det, 1, 1);
  CHECK(all.l_overall == doctest::Approx(3.3).epsilon(1e-15));
  CHECK(all.feature_grad(0, 0) == 0.5 + 1.0 * -0.25 + 0.1 * 2.0);
  CHECK(all.head_b_grad == 0.1 * 4.0);
  CHECK(std::abs(all.l_overall - (all.l_iso + cfg.mu1 * all.l_dis + cfg.mu2 * all.l_det)) < 1e-10);

  cfg.mu1 = 0.0;
  cfg.mu2 = 0.0;
  CHECK(overall_loss(cfg, &iso, &dis, &det, 1, 1).l_overall == 2.0);
}

}  // TEST_SUITE
