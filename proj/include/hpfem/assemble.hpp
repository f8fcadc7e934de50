#pragma once

// Stiffness assembly for the Laplace bilinear form on the constrained space,
// Dirichlet elimination by lifting, and point evaluation of FE solutions.

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "hpfem/dofmap.hpp"
#include "hpfem/mesh.hpp"
#include "hpfem/problem.hpp"
#include "hpfem/shape.hpp"

namespace hpfem {

struct SparseSystem {
  int n_full = 0;
  Eigen::SparseMatrix<double> matrix;  // symmetric, before Dirichlet elimination
  Eigen::VectorXd rhs;
  Eigen::VectorXd dirichlet_values;  // full length, zero on free DOFs
  std::vector<int> full_to_reduced;  // -1 on Dirichlet DOFs
  std::vector<int> reduced_to_full;
  Eigen::SparseMatrix<double> reduced_matrix;  // SPD
  Eigen::VectorXd reduced_rhs;                 // lifting applied

  // Expands a reduced solution to the full numbering, Dirichlet values filled.
  Eigen::VectorXd expand(const Eigen::VectorXd& reduced) const {
    Eigen::VectorXd full = dirichlet_values;
    for (std::size_t r = 0; r < reduced_to_full.size(); ++r)
      full[reduced_to_full[r]] = reduced[static_cast<int>(r)];
    return full;
  }
};

namespace detail {

inline std::array<double, 2> outward_normal(Side s) {
  switch (s) {
    case Side::West: return {-1.0, 0.0};
    case Side::East: return {1.0, 0.0};
    case Side::South: return {0.0, -1.0};
    case Side::North: return {0.0, 1.0};
  }
  throw std::logic_error("bad side");
}

}  // namespace detail

// Local stiffness of the Laplace form over one element in its trimmed basis.
inline Eigen::MatrixXd element_stiffness(const Element& el, const LocalBasis& lb) {
  const int n = lb.count();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  const double w = el.bounds.width(), h = el.bounds.height();
  const int n1d = std::min(kMaxQuadPoints, std::max(lb.orders.px, lb.orders.py) + 2);
  const QuadratureRule& rule = gauss_rule(n1d);
  std::vector<double> gx(n), gy(n);
  for (std::size_t qj = 0; qj < rule.nodes.size(); ++qj) {
    for (std::size_t qi = 0; qi < rule.nodes.size(); ++qi) {
      const double xi = rule.nodes[qi], eta = rule.nodes[qj];
      const double wq = rule.weights[qi] * rule.weights[qj] * w * h;
      const TensorBasisEval t = element_basis_eval(lb.orders.px, lb.orders.py, xi, eta);
      for (int s = 0; s < n; ++s) {
        const auto [i, j] = lb.tensor_ij[s];
        gx[s] = t.grad_xi[t.index(i, j)] / w;
        gy[s] = t.grad_eta[t.index(i, j)] / h;
      }
      for (int a = 0; a < n; ++a)
        for (int b = 0; b <= a; ++b) k(a, b) += wq * (gx[a] * gx[b] + gy[a] * gy[b]);
    }
  }
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) k(a, b) = k(b, a);
  return k;
}

inline SparseSystem assemble_system(const Mesh& mesh, const DofMap& dm,
                                    const Problem& problem) {
  SparseSystem sys;
  sys.n_full = dm.n_dofs;
  sys.rhs = Eigen::VectorXd::Zero(dm.n_dofs);
  std::vector<Eigen::Triplet<double>> trips;

  for (int id : mesh.active_ids()) {
    const Element& el = mesh.element(id);
    const LocalBasis& lb = dm.element_basis[id];
    const Eigen::MatrixXd k = element_stiffness(el, lb);
    const int n = lb.count();
    for (int a = 0; a < n; ++a)
      for (const LocalDof& ga : lb.expansion[a])
        for (int b = 0; b < n; ++b)
          for (const LocalDof& gb : lb.expansion[b]) {
            const double v = ga.coeff * gb.coeff * k(a, b);
            if (v != 0.0) trips.emplace_back(ga.global, gb.global, v);
          }

    // Neumann load on boundary sides outside the Dirichlet set.
    if (!problem.neumann) continue;
    for (Side s : kSides) {
      const int ei = dm.edges.side_edge(id, s);
      const Edge& e = dm.edges.edges[ei];
      if (e.kind != EdgeKind::Boundary) continue;
      bool dirichlet_side = false;
      if (!dm.edge_dofs[ei].empty()) {
        dirichlet_side = dm.is_dirichlet[dm.edge_dofs[ei][0]];
      } else if (problem.is_dirichlet) {
        auto at = [&](double t) {
          const double c = e.lo + t * (e.hi - e.lo);
          return e.axis == 0 ? std::make_pair(e.line, c) : std::make_pair(c, e.line);
        };
        auto [ax, ay] = at(0.0);
        auto [bx, by] = at(1.0);
        auto [mx, my] = at(0.5);
        dirichlet_side = problem.is_dirichlet(ax, ay) && problem.is_dirichlet(bx, by) &&
                         problem.is_dirichlet(mx, my);
      }
      if (dirichlet_side) continue;

      const auto [nx, ny] = detail::outward_normal(s);
      const double len = e.hi - e.lo;
      const QuadratureRule& rule = gauss_rule(std::min(kMaxQuadPoints, e.order + 6));
      for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        const double t = rule.nodes[q];
        const double gx = e.axis == 0 ? e.line : e.lo + t * len;
        const double gy = e.axis == 0 ? e.lo + t * len : e.line;
        const double g = problem.neumann(gx, gy, nx, ny);
        const double wq = rule.weights[q] * len * g;
        const double xi = (gx - el.bounds.x1) / el.bounds.width();
        const double eta = (gy - el.bounds.y1) / el.bounds.height();
        const TensorBasisEval tb = element_basis_eval(lb.orders.px, lb.orders.py, xi, eta);
        for (int a = 0; a < lb.count(); ++a) {
          const auto [i, j] = lb.tensor_ij[a];
          const double phi = tb.value[tb.index(i, j)];
          if (phi == 0.0) continue;
          for (const LocalDof& ga : lb.expansion[a]) sys.rhs[ga.global] += wq * phi * ga.coeff;
        }
      }
    }
  }

  sys.matrix.resize(dm.n_dofs, dm.n_dofs);
  sys.matrix.setFromTriplets(trips.begin(), trips.end());
  sys.matrix.makeCompressed();

  // Dirichlet elimination with lifting.
  sys.dirichlet_values = Eigen::VectorXd::Zero(dm.n_dofs);
  sys.full_to_reduced.assign(dm.n_dofs, -1);
  for (int d = 0; d < dm.n_dofs; ++d) {
    if (dm.is_dirichlet[d]) {
      sys.dirichlet_values[d] = dm.dirichlet_value[d];
    } else {
      sys.full_to_reduced[d] = static_cast<int>(sys.reduced_to_full.size());
      sys.reduced_to_full.push_back(d);
    }
  }
  const int n_red = static_cast<int>(sys.reduced_to_full.size());
  const Eigen::VectorXd lifted = sys.rhs - sys.matrix * sys.dirichlet_values;
  sys.reduced_rhs.resize(n_red);
  for (int r = 0; r < n_red; ++r) sys.reduced_rhs[r] = lifted[sys.reduced_to_full[r]];
  std::vector<Eigen::Triplet<double>> rtrips;
  for (int col = 0; col < sys.matrix.outerSize(); ++col) {
    const int rc = sys.full_to_reduced[col];
    if (rc < 0) continue;
    for (Eigen::SparseMatrix<double>::InnerIterator it(sys.matrix, col); it; ++it) {
      const int rr = sys.full_to_reduced[it.row()];
      if (rr >= 0) rtrips.emplace_back(rr, rc, it.value());
    }
  }
  sys.reduced_matrix.resize(n_red, n_red);
  sys.reduced_matrix.setFromTriplets(rtrips.begin(), rtrips.end());
  sys.reduced_matrix.makeCompressed();
  return sys;
}

// Energy norm sqrt(x' A x) in the pre-elimination numbering.
inline double energy_norm(const SparseSystem& sys, const Eigen::VectorXd& full) {
  if (full.size() != sys.matrix.rows())
    throw std::invalid_argument("energy_norm: dimension mismatch");
  return std::sqrt(std::max(0.0, full.dot(sys.matrix * full)));
}

struct PointValue {
  double value = 0;
  double dx = 0;
  double dy = 0;
};

// A solved FE function: full coefficient vector plus per-element local
// coefficients in the trimmed basis, precomputed for fast evaluation. Owns
// its dof map; the mesh must outlive the solution at a stable address.
class FeSolution {
 public:
  FeSolution(const Mesh& mesh, DofMap dm, Eigen::VectorXd full_coeffs)
      : mesh_(&mesh), dm_(std::move(dm)), coeffs_(std::move(full_coeffs)) {
    if (coeffs_.size() != dm_.n_dofs)
      throw std::invalid_argument("FeSolution: coefficient count mismatch");
    local_.resize(mesh.size());
    for (int id : mesh.active_ids()) {
      const LocalBasis& lb = dm_.element_basis[id];
      Eigen::VectorXd c = Eigen::VectorXd::Zero(lb.count());
      for (int s = 0; s < lb.count(); ++s)
        for (const LocalDof& d : lb.expansion[s]) c[s] += d.coeff * coeffs_[d.global];
      local_[id] = std::move(c);
    }
  }

  const Mesh& mesh() const { return *mesh_; }
  const DofMap& dofmap() const { return dm_; }
  const Eigen::VectorXd& coeffs() const { return coeffs_; }
  const Eigen::VectorXd& local_coeffs(int elem_id) const { return local_[elem_id]; }

  PointValue evaluate_in(int elem_id, double x, double y) const {
    const Element& el = mesh_->element(elem_id);
    const LocalBasis& lb = dm_.element_basis[elem_id];
    const double w = el.bounds.width(), h = el.bounds.height();
    const double xi = (x - el.bounds.x1) / w, eta = (y - el.bounds.y1) / h;
    const TensorBasisEval t = element_basis_eval(lb.orders.px, lb.orders.py, xi, eta);
    PointValue out;
    const Eigen::VectorXd& c = local_[elem_id];
    for (int s = 0; s < lb.count(); ++s) {
      const auto [i, j] = lb.tensor_ij[s];
      const int idx = t.index(i, j);
      out.value += c[s] * t.value[idx];
      out.dx += c[s] * t.grad_xi[idx] / w;
      out.dy += c[s] * t.grad_eta[idx] / h;
    }
    return out;
  }

  PointValue evaluate(double x, double y) const {
    return evaluate_in(mesh_->find_active_at(x, y), x, y);
  }

 private:
  const Mesh* mesh_;
  DofMap dm_;
  Eigen::VectorXd coeffs_;
  std::vector<Eigen::VectorXd> local_;
};

}  // namespace hpfem
