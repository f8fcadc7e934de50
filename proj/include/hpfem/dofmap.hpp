#pragma once

// Global degree-of-freedom numbering with constrained approximation on
// 1-irregular meshes. Real DOFs live on unconstrained vertices, on boundary,
// regular and master edges (minimum-rule order), and in element interiors.
// Hanging vertices and sub-edge modes carry no DOFs of their own: they
// resolve into master-edge traces, so every local basis slot expands into a
// list of (global dof, coefficient) pairs.

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "hpfem/mesh.hpp"
#include "hpfem/problem.hpp"
#include "hpfem/shape.hpp"

namespace hpfem {

struct LocalDof {
  int global;
  double coeff;
};

// Per-element basis after minimum-rule trimming. Slot order: the four corner
// functions (SW, SE, NW, NE), then side bubbles (W, E, S, N, ascending mode),
// then interior bubbles (j outer, i inner). tensor_ij maps each slot to the
// (i, j) indices of element_basis_eval.
struct LocalBasis {
  Orders orders;
  std::array<int, 4> side_order{};  // indexed by Side
  std::vector<std::pair<int, int>> tensor_ij;
  std::vector<std::vector<LocalDof>> expansion;
  int count() const { return static_cast<int>(tensor_ij.size()); }
};

struct VertexInfo {
  double x = 0, y = 0;
  int dof = -1;  // -1 for hanging vertices
  bool hanging = false;
  int master_edge = -1;
  std::vector<LocalDof> resolved;  // value as a combination of real DOFs
};

struct DofMap {
  int n_dofs = 0;
  int n_vertex_dofs = 0, n_edge_dofs = 0, n_interior_dofs = 0;
  std::vector<bool> is_dirichlet;
  std::vector<double> dirichlet_value;
  std::vector<LocalBasis> element_basis;  // by element id; empty for inactive
  std::vector<VertexInfo> vertices;
  std::map<std::pair<double, double>, int> vertex_index;
  EdgeSet edges;
  std::vector<std::vector<int>> edge_dofs;  // per edge: DOFs of modes 3..order+1
  int dirichlet_count() const {
    int n = 0;
    for (bool d : is_dirichlet) n += d ? 1 : 0;
    return n;
  }
};

namespace detail {

inline bool point_on_lshape_boundary(double x, double y) {
  return on_lshape_boundary(0, x, y, y) || on_lshape_boundary(1, y, x, x);
}

// Re-expansion of master-edge traces on one half of the edge: column m of the
// returned matrix holds the bubble coefficients (modes 3..order+1) of master
// mode m restricted to the half, after its own endpoint values are peeled
// off. half = 0 is the lower half, 1 the upper.
inline const Eigen::MatrixXd& half_edge_expansion(int order, int half) {
  static std::map<std::pair<int, int>, Eigen::MatrixXd> cache;
  auto it = cache.find({order, half});
  if (it != cache.end()) return it->second;

  const int nb = order - 1;  // bubble count
  const int nm = order + 1;  // master modes
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(std::max(nb, 0), nm);
  if (nb > 0) {
    const QuadratureRule& q = gauss_rule(std::min(kMaxQuadPoints, order + 2));
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(nb, nb);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(nb, nm);
    for (std::size_t p = 0; p < q.nodes.size(); ++p) {
      const double s = q.nodes[p], w = q.weights[p];
      std::vector<double> bder(nb);
      for (int k = 0; k < nb; ++k) bder[k] = shape_1d(k + 3, order, s).derivative;
      for (int k = 0; k < nb; ++k)
        for (int l = 0; l < nb; ++l) gram(k, l) += w * bder[k] * bder[l];
      for (int m = 0; m < nm; ++m) {
        // d/ds of chi_m(T(s)) with T = s/2 or (1+s)/2.
        const double big = half == 0 ? 0.5 * s : 0.5 * (1.0 + s);
        const double fd = 0.5 * shape_1d(m + 1, order, big).derivative;
        for (int k = 0; k < nb; ++k) rhs(k, m) += w * fd * bder[k];
      }
    }
    // Subtract the derivative of the linear interpolant of each restriction.
    for (int m = 0; m < nm; ++m) {
      const double f0 = shape_1d(m + 1, order, half == 0 ? 0.0 : 0.5).value;
      const double f1 = shape_1d(m + 1, order, half == 0 ? 0.5 : 1.0).value;
      const double lin_der = f1 - f0;
      for (std::size_t p = 0; p < q.nodes.size(); ++p) {
        const double s = q.nodes[p], w = q.weights[p];
        for (int k = 0; k < nb; ++k)
          rhs(k, m) -= w * lin_der * shape_1d(k + 3, order, s).derivative;
      }
    }
    t = gram.ldlt().solve(rhs);
  }
  return cache.emplace(std::make_pair(order, half), std::move(t)).first->second;
}

}  // namespace detail

inline DofMap build_dof_map(const Mesh& mesh, const Problem& problem) {
  {
    const AuditReport rep = mesh.audit();
    if (!rep.ok())
      throw std::invalid_argument("build_dof_map: mesh audit failed: " +
                                  rep.violations.front().what);
  }
  DofMap dm;
  dm.edges = classify_edges(mesh);
  const std::vector<int> actives = mesh.active_ids();

  // --- vertices, in first-encounter order over ascending element ids ------
  auto corner_points = [](const Rect& b) {
    return std::array<std::pair<double, double>, 4>{
        std::make_pair(b.x1, b.y1), {b.x2, b.y1}, {b.x1, b.y2}, {b.x2, b.y2}};
  };
  for (int id : actives) {
    for (auto [x, y] : corner_points(mesh.element(id).bounds)) {
      if (!dm.vertex_index.count({x, y})) {
        dm.vertex_index[{x, y}] = static_cast<int>(dm.vertices.size());
        dm.vertices.push_back({x, y, -1, false, -1, {}});
      }
    }
  }
  // Hanging vertices are exactly the master-edge midpoints.
  for (std::size_t ei = 0; ei < dm.edges.edges.size(); ++ei) {
    const Edge& e = dm.edges.edges[ei];
    if (e.kind != EdgeKind::Master) continue;
    const double mx = e.axis == 0 ? e.line : e.mid();
    const double my = e.axis == 0 ? e.mid() : e.line;
    auto it = dm.vertex_index.find({mx, my});
    if (it == dm.vertex_index.end())
      throw std::logic_error("build_dof_map: master edge midpoint is not a vertex");
    dm.vertices[it->second].hanging = true;
    dm.vertices[it->second].master_edge = static_cast<int>(ei);
  }
  for (VertexInfo& v : dm.vertices)
    if (!v.hanging) v.dof = dm.n_dofs++;
  dm.n_vertex_dofs = dm.n_dofs;

  // --- edge DOFs -----------------------------------------------------------
  dm.edge_dofs.resize(dm.edges.edges.size());
  for (std::size_t ei = 0; ei < dm.edges.edges.size(); ++ei) {
    const Edge& e = dm.edges.edges[ei];
    if (e.kind == EdgeKind::Sub) continue;
    for (int k = 3; k <= e.order + 1; ++k) dm.edge_dofs[ei].push_back(dm.n_dofs++);
  }
  dm.n_edge_dofs = dm.n_dofs - dm.n_vertex_dofs;

  // --- interior DOFs ---------------------------------------------------—--
  std::vector<int> interior_start(mesh.size(), -1);
  for (int id : actives) {
    interior_start[id] = dm.n_dofs;
    const Orders o = mesh.element(id).orders;
    dm.n_dofs += (o.px - 1) * (o.py - 1);
  }
  dm.n_interior_dofs = dm.n_dofs - dm.n_vertex_dofs - dm.n_edge_dofs;

  // --- Dirichlet flags and values ------------------------------------------
  dm.is_dirichlet.assign(dm.n_dofs, false);
  dm.dirichlet_value.assign(dm.n_dofs, 0.0);
  auto bc_value = [&](double x, double y) {
    return problem.dirichlet_value ? problem.dirichlet_value(x, y) : 0.0;
  };
  const bool have_pred = static_cast<bool>(problem.is_dirichlet);
  for (const VertexInfo& v : dm.vertices) {
    if (v.hanging || !have_pred) continue;
    if (detail::point_on_lshape_boundary(v.x, v.y) && problem.is_dirichlet(v.x, v.y)) {
      dm.is_dirichlet[v.dof] = true;
      dm.dirichlet_value[v.dof] = bc_value(v.x, v.y);
    }
  }
  for (std::size_t ei = 0; ei < dm.edges.edges.size(); ++ei) {
    const Edge& e = dm.edges.edges[ei];
    if (e.kind != EdgeKind::Boundary || !have_pred || dm.edge_dofs[ei].empty()) continue;
    auto at = [&](double t) {
      const double c = e.lo + t * (e.hi - e.lo);
      return e.axis == 0 ? std::make_pair(e.line, c) : std::make_pair(c, e.line);
    };
    auto [ax, ay] = at(0.0);
    auto [bx, by] = at(1.0);
    auto [mx, my] = at(0.5);
    if (!(problem.is_dirichlet(ax, ay) && problem.is_dirichlet(bx, by) &&
          problem.is_dirichlet(mx, my)))
      continue;
    // L2 projection of the boundary data minus its endpoint interpolant onto
    // the edge bubbles; exact for polynomial data up to the edge order.
    const int nb = static_cast<int>(dm.edge_dofs[ei].size());
    const double va = bc_value(ax, ay), vb = bc_value(bx, by);
    const QuadratureRule& q = gauss_rule(std::min(kMaxQuadPoints, e.order + 6));
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(nb, nb);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nb);
    for (std::size_t p = 0; p < q.nodes.size(); ++p) {
      const double t = q.nodes[p], w = q.weights[p];
      std::vector<double> bval(nb);
      for (int k = 0; k < nb; ++k) bval[k] = shape_1d(k + 3, e.order, t).value;
      auto [cx, cy] = at(t);
      const double resid = bc_value(cx, cy) - (va + (vb - va) * t);
      for (int k = 0; k < nb; ++k) {
        rhs(k) += w * resid * bval[k];
        for (int l = 0; l < nb; ++l) gram(k, l) += w * bval[k] * bval[l];
      }
    }
    const Eigen::VectorXd c = nb > 0 ? Eigen::VectorXd(gram.ldlt().solve(rhs))
                                     : Eigen::VectorXd();
    for (int k = 0; k < nb; ++k) {
      dm.is_dirichlet[dm.edge_dofs[ei][k]] = true;
      dm.dirichlet_value[dm.edge_dofs[ei][k]] = c(k);
    }
  }

  // --- hanging-vertex resolution -------------------------------------------
  std::vector<char> resolved_flag(dm.vertices.size(), 0);
  std::function<const std::vector<LocalDof>&(int)> resolve =
      [&](int vi) -> const std::vector<LocalDof>& {
    VertexInfo& v = dm.vertices[vi];
    if (resolved_flag[vi]) return v.resolved;
    if (!v.hanging) {
      v.resolved = {{v.dof, 1.0}};
    } else {
      const Edge& m = dm.edges.edges[v.master_edge];
      const double ax = m.axis == 0 ? m.line : m.lo;
      const double ay = m.axis == 0 ? m.lo : m.line;
      const double bx = m.axis == 0 ? m.line : m.hi;
      const double by = m.axis == 0 ? m.hi : m.line;
      std::map<int, double> acc;
      for (const LocalDof& d : resolve(dm.vertex_index.at({ax, ay})))
        acc[d.global] += 0.5 * d.coeff;
      for (const LocalDof& d : resolve(dm.vertex_index.at({bx, by})))
        acc[d.global] += 0.5 * d.coeff;
      for (std::size_t k = 0; k < dm.edge_dofs[v.master_edge].size(); ++k)
        acc[dm.edge_dofs[v.master_edge][k]] +=
            shape_1d(static_cast<int>(k) + 3, m.order, 0.5).value;
      v.resolved.clear();
      for (auto [dof, c] : acc)
        if (c != 0.0) v.resolved.push_back({dof, c});
    }
    resolved_flag[vi] = 1;
    return v.resolved;
  };
  for (std::size_t vi = 0; vi < dm.vertices.size(); ++vi) resolve(static_cast<int>(vi));

  // Master-edge modes as real-DOF lists, for sub-edge expansions.
  auto master_mode_dofs = [&](int ei, int mode) -> std::vector<LocalDof> {
    const Edge& m = dm.edges.edges[ei];
    if (mode == 0 || mode == 1) {
      const double cx = m.axis == 0 ? m.line : (mode == 0 ? m.lo : m.hi);
      const double cy = m.axis == 0 ? (mode == 0 ? m.lo : m.hi) : m.line;
      return dm.vertices[dm.vertex_index.at({cx, cy})].resolved;
    }
    return {{dm.edge_dofs[ei][mode - 2], 1.0}};
  };

  // --- per-element local bases ----------------------------------------------
  dm.element_basis.resize(mesh.size());
  for (int id : actives) {
    const Element& el = mesh.element(id);
    LocalBasis lb;
    lb.orders = el.orders;
    for (Side s : kSides) {
      const int ei = dm.edges.side_edge(id, s);
      if (ei < 0) throw std::logic_error("build_dof_map: side without an edge");
      lb.side_order[static_cast<int>(s)] = dm.edges.edges[ei].order;
    }

    auto push_slot = [&](int i, int j, std::vector<LocalDof> exp) {
      lb.tensor_ij.emplace_back(i, j);
      lb.expansion.push_back(std::move(exp));
    };

    // Corner slots.
    const Rect& b = el.bounds;
    const std::array<std::pair<double, double>, 4> corners = {
        std::make_pair(b.x1, b.y1), {b.x2, b.y1}, {b.x1, b.y2}, {b.x2, b.y2}};
    const std::array<std::pair<int, int>, 4> corner_ij = {
        std::make_pair(0, 0), {1, 0}, {0, 1}, {1, 1}};
    for (int c = 0; c < 4; ++c) {
      const int vi = dm.vertex_index.at(corners[c]);
      push_slot(corner_ij[c].first, corner_ij[c].second, dm.vertices[vi].resolved);
    }

    // Side bubble slots.
    for (Side s : kSides) {
      const int ei = dm.edges.side_edge(id, s);
      const Edge& e = dm.edges.edges[ei];
      const int q = e.order;
      for (int k = 3; k <= q + 1; ++k) {
        const auto [i, j] = [&]() -> std::pair<int, int> {
          switch (s) {
            case Side::West: return {0, k - 1};
            case Side::East: return {1, k - 1};
            case Side::South: return {k - 1, 0};
            case Side::North: return {k - 1, 1};
          }
          throw std::logic_error("bad side");
        }();
        if (e.kind != EdgeKind::Sub) {
          push_slot(i, j, {{dm.edge_dofs[ei][k - 3], 1.0}});
        } else {
          const Edge& m = dm.edges.edges[e.master];
          const int half = e.lo == m.lo ? 0 : 1;
          const Eigen::MatrixXd& t = detail::half_edge_expansion(m.order, half);
          std::map<int, double> acc;
          for (int mode = 0; mode < m.order + 1; ++mode) {
            const double w = t(k - 3, mode);
            if (w == 0.0) continue;
            for (const LocalDof& d : master_mode_dofs(e.master, mode))
              acc[d.global] += w * d.coeff;
          }
          std::vector<LocalDof> exp;
          for (auto [dof, c] : acc)
            if (c != 0.0) exp.push_back({dof, c});
          push_slot(i, j, std::move(exp));
        }
      }
    }

    // Interior slots.
    int idof = interior_start[id];
    for (int j = 2; j <= el.orders.py; ++j)
      for (int i = 2; i <= el.orders.px; ++i)
        push_slot(i, j, {{idof++, 1.0}});

    dm.element_basis[id] = std::move(lb);
  }
  return dm;
}

}  // namespace hpfem
