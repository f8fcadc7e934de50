#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "hpfem/shape.hpp"

using namespace hpfem;

TEST_CASE("linear shape functions and their derivatives", "[shape]") {
  auto s1 = shape_1d(1, 1, 0.0);
  CHECK(s1.value == 1.0);
  CHECK(s1.derivative == -1.0);
  auto s2 = shape_1d(2, 1, 0.0);
  CHECK(s2.value == 0.0);
  CHECK(s2.derivative == 1.0);
  // chi_1 + chi_2 == 1 everywhere.
  for (double xi : {0.0, 0.13, 0.5, 0.98, 1.0}) {
    CHECK(shape_1d(1, 1, xi).value + shape_1d(2, 1, xi).value == Catch::Approx(1.0).margin(1e-15));
  }
}

TEST_CASE("first bubble is xi(1-xi)", "[shape]") {
  auto s = shape_1d(3, 2, 0.5);
  CHECK(s.value == Catch::Approx(0.25).margin(1e-15));
  CHECK(s.derivative == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("bubbles vanish at both endpoints", "[shape]") {
  for (int p = 2; p <= kMaxOrder; ++p) {
    for (int k = 3; k <= p + 1; ++k) {
      CHECK(shape_1d(k, p, 0.0).value == 0.0);
      CHECK(shape_1d(k, p, 1.0).value == 0.0);
    }
  }
}

TEST_CASE("shape index out of range throws", "[shape]") {
  CHECK_THROWS_AS(shape_1d(0, 3, 0.5), std::out_of_range);
  CHECK_THROWS_AS(shape_1d(5, 3, 0.5), std::out_of_range);
  CHECK_THROWS_AS(shape_1d(1, 0, 0.5), std::invalid_argument);
}

TEST_CASE("derivatives match finite differences", "[shape]") {
  std::mt19937 rng(1234);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  const double h = 1e-7;
  for (int trial = 0; trial < 100; ++trial) {
    const double xi = unif(rng);
    for (int p = 1; p <= kMaxOrder; ++p) {
      for (int k = 1; k <= p + 1; ++k) {
        const double fd =
            (shape_1d(k, p, xi + h).value - shape_1d(k, p, xi - h).value) / (2.0 * h);
        const double d = shape_1d(k, p, xi).derivative;
        CHECK(d == Catch::Approx(fd).margin(1e-6 * std::max(1.0, std::abs(d))));
      }
    }
  }
}

TEST_CASE("lowest quadrature rules match closed forms", "[shape]") {
  const auto& r1 = gauss_rule(1);
  REQUIRE(r1.nodes.size() == 1);
  CHECK(r1.nodes[0] == Catch::Approx(0.5).margin(1e-15));
  CHECK(r1.weights[0] == Catch::Approx(1.0).margin(1e-15));

  const auto& r2 = gauss_rule(2);
  const double off = 0.5 / std::sqrt(3.0);
  REQUIRE(r2.nodes.size() == 2);
  CHECK(r2.nodes[0] == Catch::Approx(0.5 - off).margin(1e-15));
  CHECK(r2.nodes[1] == Catch::Approx(0.5 + off).margin(1e-15));
  CHECK(r2.weights[0] == Catch::Approx(0.5).margin(1e-15));
  CHECK(r2.weights[1] == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("three-point rule integrates quartics exactly", "[shape]") {
  const auto& r = gauss_rule(3);
  double integral = 0.0;
  for (std::size_t q = 0; q < r.nodes.size(); ++q)
    integral += r.weights[q] * std::pow(r.nodes[q], 4);
  CHECK(integral == Catch::Approx(0.2).margin(1e-14));
}

TEST_CASE("rules are exact to degree 2n-1 and well formed", "[shape]") {
  for (int n = 1; n <= kMaxQuadPoints; ++n) {
    const auto& r = gauss_rule(n);
    REQUIRE(static_cast<int>(r.nodes.size()) == n);
    double wsum = 0.0;
    for (int q = 0; q < n; ++q) {
      CHECK(r.nodes[q] > 0.0);
      CHECK(r.nodes[q] < 1.0);
      CHECK(r.weights[q] > 0.0);
      wsum += r.weights[q];
    }
    CHECK(wsum == Catch::Approx(1.0).margin(1e-15));
    for (int d = 0; d <= 2 * n - 1; ++d) {
      double integral = 0.0;
      for (int q = 0; q < n; ++q) integral += r.weights[q] * std::pow(r.nodes[q], d);
      CHECK(integral == Catch::Approx(1.0 / (d + 1)).epsilon(1e-12));
    }
  }
}

TEST_CASE("quadrature point count is validated", "[shape]") {
  CHECK_THROWS_AS(gauss_rule(0), std::invalid_argument);
  CHECK_THROWS_AS(gauss_rule(17), std::invalid_argument);
}

TEST_CASE("tensor basis at a corner", "[shape]") {
  auto b = element_basis_eval(1, 1, 0.0, 0.0);
  REQUIRE(b.count() == 4);
  CHECK(b.value[0] == 1.0);
  CHECK(b.value[1] == 0.0);
  CHECK(b.value[2] == 0.0);
  CHECK(b.value[3] == 0.0);
}

TEST_CASE("tensor basis matches 1D factorizations", "[shape]") {
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int px = 1 + static_cast<int>(rng() % kMaxOrder);
    const int py = 1 + static_cast<int>(rng() % kMaxOrder);
    const double xi = unif(rng), eta = unif(rng);
    auto b = element_basis_eval(px, py, xi, eta);
    REQUIRE(b.count() == (px + 1) * (py + 1));
    for (int j = 0; j <= py; ++j) {
      for (int i = 0; i <= px; ++i) {
        const auto fx = shape_1d(i + 1, px, xi);
        const auto fy = shape_1d(j + 1, py, eta);
        const int idx = b.index(i, j);
        CHECK(b.value[idx] == Catch::Approx(fx.value * fy.value).margin(1e-15));
        CHECK(b.grad_xi[idx] == Catch::Approx(fx.derivative * fy.value).margin(1e-14));
        CHECK(b.grad_eta[idx] == Catch::Approx(fx.value * fy.derivative).margin(1e-14));
      }
    }
  }
}
