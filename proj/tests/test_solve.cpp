#include <catch2/catch_amalgamated.hpp>

#include <random>

#include <Eigen/Dense>

#include "hpfem/solve.hpp"

using namespace hpfem;

namespace {

Eigen::SparseMatrix<double> from_dense(const Eigen::MatrixXd& d) {
  Eigen::SparseMatrix<double> s(d.rows(), d.cols());
  for (int c = 0; c < d.cols(); ++c)
    for (int r = 0; r < d.rows(); ++r)
      if (d(r, c) != 0.0) s.insert(r, c) = d(r, c);
  s.makeCompressed();
  return s;
}

}  // namespace

TEST_CASE("natural-ordering factor of a pinned 2x2 matrix", "[solve]") {
  Eigen::MatrixXd a(2, 2);
  a << 4, 2, 2, 3;
  CholeskySolver chol(from_dense(a), Ordering::Natural);
  const Eigen::MatrixXd l = Eigen::MatrixXd(chol.factor_l());
  CHECK(l(0, 0) == Catch::Approx(2.0).margin(1e-14));
  CHECK(l(0, 1) == Catch::Approx(0.0).margin(1e-14));
  CHECK(l(1, 0) == Catch::Approx(1.0).margin(1e-14));
  CHECK(l(1, 1) == Catch::Approx(std::sqrt(2.0)).margin(1e-14));
}

TEST_CASE("solves match a dense reference", "[solve]") {
  std::mt19937 rng(42);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 60;
  Eigen::MatrixXd b(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) b(i, j) = normal(rng);
  const Eigen::MatrixXd a = b.transpose() * b + Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i) rhs[i] = normal(rng);

  const Eigen::VectorXd reference = a.ldlt().solve(rhs);
  for (Ordering ord : {Ordering::Amd, Ordering::Natural}) {
    CholeskySolver chol(from_dense(a), ord);
    const Eigen::VectorXd x = chol.solve(rhs);
    CHECK((x - reference).norm() < 1e-10 * reference.norm());
  }
}

TEST_CASE("asymmetric matrices are rejected", "[solve]") {
  Eigen::MatrixXd a(2, 2);
  a << 4, 2, 1, 3;
  CHECK_THROWS_AS(CholeskySolver(from_dense(a)), std::invalid_argument);
}

TEST_CASE("indefinite matrices are rejected", "[solve]") {
  Eigen::MatrixXd a(2, 2);
  a << 1, 0, 0, -1;
  CHECK_THROWS_AS(CholeskySolver(from_dense(a)), std::runtime_error);
}

TEST_CASE("rhs dimension mismatch is rejected", "[solve]") {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
  CholeskySolver chol(from_dense(a));
  CHECK_THROWS_AS(chol.solve(Eigen::VectorXd::Zero(4)), std::invalid_argument);
}
