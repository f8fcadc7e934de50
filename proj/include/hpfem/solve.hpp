#pragma once

// Sparse symmetric positive definite solves via a Cholesky factorization
// under a fill-reducing ordering (A = P' L L' P). The natural ordering is
// available for tests that pin the factor itself.

#include <stdexcept>
#include <variant>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "hpfem/assemble.hpp"

namespace hpfem {

enum class Ordering { Amd, Natural };

class CholeskySolver {
  using AmdLlt =
      Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower,
                           Eigen::AMDOrdering<int>>;
  using NaturalLlt =
      Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower,
                           Eigen::NaturalOrdering<int>>;

 public:
  explicit CholeskySolver(const Eigen::SparseMatrix<double>& a,
                          Ordering ordering = Ordering::Amd) {
    if (a.rows() != a.cols())
      throw std::invalid_argument("CholeskySolver: matrix is not square");
    check_symmetric(a);
    n_ = static_cast<int>(a.rows());
    if (ordering == Ordering::Amd) {
      llt_.emplace<AmdLlt>();
      std::get<AmdLlt>(llt_).compute(a);
      if (std::get<AmdLlt>(llt_).info() != Eigen::Success)
        throw std::runtime_error("CholeskySolver: matrix is not positive definite");
    } else {
      llt_.emplace<NaturalLlt>();
      std::get<NaturalLlt>(llt_).compute(a);
      if (std::get<NaturalLlt>(llt_).info() != Eigen::Success)
        throw std::runtime_error("CholeskySolver: matrix is not positive definite");
    }
  }

  int size() const { return n_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    if (rhs.size() != n_) throw std::invalid_argument("CholeskySolver: rhs size mismatch");
    if (std::holds_alternative<AmdLlt>(llt_)) return std::get<AmdLlt>(llt_).solve(rhs);
    return std::get<NaturalLlt>(llt_).solve(rhs);
  }

  // Lower-triangular factor of the permuted matrix.
  Eigen::SparseMatrix<double> factor_l() const {
    if (std::holds_alternative<AmdLlt>(llt_))
      return std::get<AmdLlt>(llt_).matrixL();
    return std::get<NaturalLlt>(llt_).matrixL();
  }

 private:
  static void check_symmetric(const Eigen::SparseMatrix<double>& a) {
    const Eigen::SparseMatrix<double> diff = a - Eigen::SparseMatrix<double>(a.transpose());
    double scale = 0.0;
    for (int c = 0; c < a.outerSize(); ++c)
      for (Eigen::SparseMatrix<double>::InnerIterator it(a, c); it; ++it)
        scale = std::max(scale, std::abs(it.value()));
    for (int c = 0; c < diff.outerSize(); ++c)
      for (Eigen::SparseMatrix<double>::InnerIterator it(diff, c); it; ++it)
        if (std::abs(it.value()) > 1e-12 * std::max(1.0, scale))
          throw std::invalid_argument("CholeskySolver: matrix is not symmetric");
  }

  int n_ = 0;
  std::variant<std::monostate, AmdLlt, NaturalLlt> llt_;
};

// Solves the reduced system and returns the full coefficient vector with
// Dirichlet values in place.
inline Eigen::VectorXd solve_system(const SparseSystem& sys,
                                    Ordering ordering = Ordering::Amd) {
  if (sys.reduced_matrix.rows() == 0) return sys.dirichlet_values;
  CholeskySolver chol(sys.reduced_matrix, ordering);
  return sys.expand(chol.solve(sys.reduced_rhs));
}

}  // namespace hpfem
