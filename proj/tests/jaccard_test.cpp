#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "segfuse/jaccard.hpp"
#include "segfuse/rng.hpp"

using namespace segfuse;

TEST_CASE("empty against empty scores a perfect 1") {
  Grid<double> truth(4, 4, 0.0), pred(4, 4, 0.0);
  CHECK(jaccard_image(truth, pred) == 1.0);
  CHECK(jaccard_loss(truth, pred) == 0.0);
  // and the gradient of the constant branch vanishes
  Grid<double> g = jaccard_loss_grad(truth, pred);
  for (double v : g.v) CHECK(v == 0.0);
}

TEST_CASE("perfect and disjoint predictions") {
  Grid<double> truth(2, 2, 0.0);
  truth.at(0, 0) = 1.0;
  Grid<double> same = truth;
  CHECK(jaccard_image(truth, same) == doctest::Approx(1.0).epsilon(1e-12));

  Grid<double> miss(2, 2, 0.0);
  miss.at(1, 1) = 1.0;
  CHECK(jaccard_image(truth, miss) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("soft overlap worked example") {
  // t = (1, 0), p = (0.5, 0.5): I = 0.5, U = 2.0 - 0.5 = 1.5
  Grid<double> truth(1, 2, 0.0);
  truth.at(0, 0) = 1.0;
  Grid<double> pred(1, 2, 0.5);
  CHECK(jaccard_image(truth, pred) == doctest::Approx(0.5 / 1.5).epsilon(1e-14));
  CHECK(jaccard_loss(truth, pred) == doctest::Approx(1.0 - 0.5 / 1.5).epsilon(1e-14));
}

TEST_CASE("binary worked example: intersection one of union three") {
  Grid<double> truth(1, 4, 0.0), pred(1, 4, 0.0);
  truth.at(0, 0) = truth.at(0, 1) = 1.0;
  pred.at(0, 1) = pred.at(0, 2) = 1.0;
  CHECK(jaccard_image(truth, pred) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("all-ones truth against a constant map loses exactly 1-p") {
  // I = pN, U = N + pN - pN = N, so J = p and the loss is 1 - p.
  for (double p : {0.1, 0.35, 0.8}) {
    Grid<double> truth(5, 7, 1.0), pred(5, 7, p);
    CHECK(jaccard_loss(truth, pred) == doctest::Approx(1.0 - p).epsilon(1e-12));
  }
}

TEST_CASE("symmetry, duality, and binary monotonicity") {
  Rng rng(88);
  for (int trial = 0; trial < 10; ++trial) {
    Grid<double> a(6, 6), b(6, 6);
    for (auto& v : a.v) v = rng.uniform();
    for (auto& v : b.v) v = rng.uniform();
    CHECK(jaccard_image(a, b) == jaccard_image(b, a));
    CHECK(jaccard_loss(a, b) + jaccard_image(a, b) == 1.0);  // exact, same sums
  }

  Grid<double> truth(4, 4, 0.0), pred(4, 4, 0.0);
  for (int i = 0; i < 8; ++i) truth.v[size_t(i)] = 1.0;
  pred.v[0] = 1.0;
  double j = jaccard_image(truth, pred);
  pred.v[1] = 1.0;  // another correctly predicted pixel
  double j_hit = jaccard_image(truth, pred);
  CHECK(j_hit >= j);
  pred.v[15] = 1.0;  // a false positive
  CHECK(jaccard_image(truth, pred) <= j_hit);
}

TEST_CASE("non-finite inputs are rejected") {
  Grid<double> truth(2, 2, 0.0), pred(2, 2, 0.5);
  pred.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(jaccard_image(truth, pred), Error);
  pred.at(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(jaccard_loss(truth, pred), Error);
}

TEST_CASE("analytic gradient matches central differences") {
  Rng rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    Grid<double> truth(4, 4), pred(4, 4);
    for (auto& v : truth.v) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    for (auto& v : pred.v) v = rng.uniform(0.05, 0.95);
    Grid<double> got = jaccard_loss_grad(truth, pred);
    Grid<double> want = oracle::fd_jaccard_grad(truth, pred);
    for (size_t i = 0; i < got.v.size(); ++i) {
      double denom = std::max(std::fabs(want.v[i]), 1e-8);
      CHECK(std::fabs(got.v[i] - want.v[i]) / denom < 1e-6);
    }
  }
}

TEST_CASE("float instantiation agrees with double") {
  Grid<float> truth(2, 2, 0.0f), pred(2, 2, 0.25f);
  truth.at(0, 1) = 1.0f;
  double jf = jaccard_image(truth, pred);
  // I = 0.25, U = (1 + 4*0.25) - 0.25 = 1.75
  CHECK(jf == doctest::Approx(0.25 / 1.75).epsilon(1e-6));
}

TEST_CASE("shape mismatches are rejected") {
  Grid<double> truth(2, 2, 0.0), pred(2, 3, 0.0);
  CHECK_THROWS_AS(jaccard_image(truth, pred), Error);
}

TEST_CASE("gain basics") {
  CHECK(gain(1.1, 1.0) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(gain(0.9, 1.0) == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(gain(0.731, 0.731) == 0.0);
  CHECK_THROWS_AS(gain(0.5, 0.0), Error);
  CHECK_THROWS_AS(gain(0.5, -1.0), Error);
}

TEST_CASE("published fusion gains reproduce from the f-scores") {
  struct Row {
    double baseline, fused, published_pct;
  };
  const Row rows[] = {
      {0.8559, 0.8639, 0.93},
      {0.6805, 0.7080, 4.04},
      {0.5627, 0.5794, 2.97},
      {0.5855, 0.6290, 7.43},
  };
  for (const Row& r : rows)
    CHECK(std::fabs(gain(r.fused, r.baseline) * 100.0 - r.published_pct) <= 0.01);
}
