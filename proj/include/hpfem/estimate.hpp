#pragma once

// Candidate refinement enumeration, projection-based interpolation against
// the fine-grid solution, error-decrease rates, and per-element optimal
// selection.
//
// Candidate enumeration order (also the tie-break order of last resort):
// P_REF with (dx,dy) in {(0,1),(1,0),(1,1)}, then H_X, H_Y, H_XY with son
// order deltas in lexicographic order, sons ordered left/right, bottom/top,
// SW/SE/NW/NE respectively.

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "hpfem/assemble.hpp"
#include "hpfem/mesh.hpp"

namespace hpfem {

struct Candidate {
  Refinement refinement;
  int delta_ndof = 0;
};

struct CandidateEvaluation {
  Candidate candidate;
  double err_projected = 0;  // |u_fine - w|_{H1(K)}
  double err_baseline = 0;   // |u_fine - u_hp|_{H1(K)}
  double rate = 0;           // (baseline - projected) / delta_ndof
};

struct ProjectionResult {
  Eigen::VectorXd coeffs;  // in the candidate's glued-basis enumeration
  double error = 0;
};

namespace detail {

// Conforming dimension of a broken (or unbroken) local space: distinct grid
// vertices, plus minimum-rule modes on distinct edges, plus son interiors.
inline int local_space_dim(RefineKind kind, const std::array<Orders, 4>& sons) {
  std::vector<Rect> rects;
  switch (kind) {
    case RefineKind::PRef: rects = {Rect{0, 0, 1, 1}}; break;
    case RefineKind::HX: rects = {Rect{0, 0, 0.5, 1}, Rect{0.5, 0, 1, 1}}; break;
    case RefineKind::HY: rects = {Rect{0, 0, 1, 0.5}, Rect{0, 0.5, 1, 1}}; break;
    case RefineKind::HXY:
      rects = {Rect{0, 0, 0.5, 0.5}, Rect{0.5, 0, 1, 0.5}, Rect{0, 0.5, 0.5, 1},
               Rect{0.5, 0.5, 1, 1}};
      break;
  }
  std::map<std::pair<double, double>, int> verts;
  std::map<std::tuple<int, double, double, double>, int> edge_order;
  int interior = 0;
  for (std::size_t s = 0; s < rects.size(); ++s) {
    const Rect& r = rects[s];
    const Orders o = sons[s];
    const std::array<std::pair<double, double>, 4> corners = {
        std::pair{r.x1, r.y1}, {r.x2, r.y1}, {r.x1, r.y2}, {r.x2, r.y2}};
    for (auto [x, y] : corners) verts[{x, y}] = 1;
    auto touch_edge = [&](int axis, double line, double lo, double hi, int q) {
      auto [it, fresh] = edge_order.emplace(std::make_tuple(axis, line, lo, hi), q);
      if (!fresh) it->second = std::min(it->second, q);  // interface: minimum rule
    };
    touch_edge(0, r.x1, r.y1, r.y2, o.py);
    touch_edge(0, r.x2, r.y1, r.y2, o.py);
    touch_edge(1, r.y1, r.x1, r.x2, o.px);
    touch_edge(1, r.y2, r.x1, r.x2, o.px);
    interior += (o.px - 1) * (o.py - 1);
  }
  int dim = static_cast<int>(verts.size()) + interior;
  for (const auto& [key, q] : edge_order) dim += q - 1;
  return dim;
}

}  // namespace detail

inline std::vector<Candidate> enumerate_candidates(const Element& e) {
  if (!e.active()) throw std::invalid_argument("enumerate_candidates: element inactive");
  const Orders o = e.orders;
  if (o.px > kMaxOrder - 1 || o.py > kMaxOrder - 1)
    throw std::domain_error("enumerate_candidates: order overflow");
  const int base = (o.px + 1) * (o.py + 1);
  std::vector<Candidate> out;
  out.reserve(291);
  auto push = [&](Refinement r) {
    std::array<Orders, 4> sons = r.sons;
    const int dim = detail::local_space_dim(r.kind, sons);
    out.push_back({r, dim - base});
  };
  const std::array<std::pair<int, int>, 3> p_deltas = {std::pair{0, 1}, {1, 0}, {1, 1}};
  for (auto [dx, dy] : p_deltas) push(Refinement::p_ref({o.px + dx, o.py + dy}));
  const std::array<std::pair<int, int>, 4> deltas = {
      std::pair{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  auto son = [&](std::pair<int, int> d) { return Orders{o.px + d.first, o.py + d.second}; };
  for (auto d0 : deltas)
    for (auto d1 : deltas) push(Refinement::h_x(son(d0), son(d1)));
  for (auto d0 : deltas)
    for (auto d1 : deltas) push(Refinement::h_y(son(d0), son(d1)));
  for (auto d0 : deltas)
    for (auto d1 : deltas)
      for (auto d2 : deltas)
        for (auto d3 : deltas) push(Refinement::h_xy(son(d0), son(d1), son(d2), son(d3)));
  return out;
}

// ---------------------------------------------------------------------------
// ElementProjector: per-element workspace for projecting the fine solution
// onto candidate spaces. Every candidate space is a subset of one of four
// maximal "family" spaces (unbroken, H_X, H_Y, H_XY with all son orders
// p+1), so Gram matrices and load vectors are assembled once per family and
// candidates only extract submatrices.
// ---------------------------------------------------------------------------

class ElementProjector {
  struct Fn {
    // (son, i, j) tensor pieces; a candidate keeps the function iff every
    // piece satisfies i <= son px and j <= son py.
    std::vector<std::array<int, 3>> pieces;
  };
  struct Family {
    std::vector<Rect> sons;
    Orders son_orders{};
    std::vector<Fn> fns;
    std::array<int, 4> corner_fn{-1, -1, -1, -1};
    std::array<int, 4> fine_to_son{};
    Eigen::MatrixXd gram;
    Eigen::VectorXd load;
    std::array<Eigen::MatrixXd, 4> gradx, grady;  // per fine quarter
  };

 public:
  ElementProjector(const FeSolution& fine, int elem_id)
      : ElementProjector(nullptr, &fine, elem_id) {}
  ElementProjector(const FeSolution& coarse, const FeSolution& fine, int elem_id)
      : ElementProjector(&coarse, &fine, elem_id) {}

  const Element& element() const { return elem_; }

  double baseline_error() const {
    if (!have_baseline_)
      throw std::logic_error("ElementProjector: no coarse solution supplied");
    return baseline_;
  }

  ProjectionResult project(const Candidate& c) const {
    const Family& fam = family_for(c.refinement.kind);
    const std::vector<int> subset = candidate_subset(fam, c);
    const int n = static_cast<int>(subset.size());
    if (n - (elem_.orders.px + 1) * (elem_.orders.py + 1) != c.delta_ndof)
      throw std::logic_error("ElementProjector: candidate dimension mismatch");

    // Corner coefficients are pinned to the fine solution's vertex values.
    std::vector<int> free;
    std::vector<int> fixed_pos(n, -1);
    Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(n);
    for (int s = 0; s < n; ++s) {
      bool is_corner = false;
      for (int cidx = 0; cidx < 4; ++cidx) {
        if (subset[s] == fam.corner_fn[cidx]) {
          coeffs[s] = corner_values_[cidx];
          is_corner = true;
          break;
        }
      }
      if (!is_corner) free.push_back(s);
    }
    const int nf = static_cast<int>(free.size());
    Eigen::MatrixXd gff(nf, nf);
    Eigen::VectorXd rhs(nf);
    for (int a = 0; a < nf; ++a) {
      const int ga = subset[free[a]];
      double r = fam.load[ga];
      for (int s = 0; s < n; ++s)
        if (coeffs[s] != 0.0) r -= fam.gram(ga, subset[s]) * coeffs[s];
      rhs[a] = r;
      for (int b = 0; b < nf; ++b) gff(a, b) = fam.gram(ga, subset[free[b]]);
    }
    if (nf > 0) {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(gff);
      if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("project_local: singular normal equations");
      const Eigen::VectorXd cf = ldlt.solve(rhs);
      if (!cf.allFinite())
        throw std::runtime_error("project_local: singular normal equations");
      for (int a = 0; a < nf; ++a) coeffs[free[a]] = cf[a];
    }

    // Error by direct quadrature of |grad u_fine - grad w|^2; avoids the
    // cancellation of the algebraic identity near exact representation.
    double err2 = 0.0;
    for (int q = 0; q < 4; ++q) {
      const Eigen::MatrixXd& gx = fam.gradx[q];
      const Eigen::MatrixXd& gy = fam.grady[q];
      Eigen::VectorXd wx = Eigen::VectorXd::Zero(gx.rows());
      Eigen::VectorXd wy = Eigen::VectorXd::Zero(gx.rows());
      for (int s = 0; s < n; ++s) {
        if (coeffs[s] == 0.0) continue;
        wx += coeffs[s] * gx.col(subset[s]);
        wy += coeffs[s] * gy.col(subset[s]);
      }
      err2 += (weights_[q].array() *
               ((fine_gx_[q] - wx).array().square() + (fine_gy_[q] - wy).array().square()))
                  .sum();
    }
    return {coeffs, std::sqrt(std::max(0.0, err2))};
  }

  // w evaluated at a point of K; for tests and diagnostics.
  PointValue evaluate_candidate(const Candidate& c, const ProjectionResult& pr, double x,
                                double y) const {
    const Family& fam = family_for(c.refinement.kind);
    const std::vector<int> subset = candidate_subset(fam, c);
    PointValue out;
    for (std::size_t s = 0; s < subset.size(); ++s) {
      const Fn& fn = fam.fns[subset[s]];
      for (const auto& [sidx, i, j] : fn.pieces) {
        const Rect& r = fam.sons[sidx];
        if (!r.contains(x, y)) continue;
        const double w = r.width(), h = r.height();
        const TensorBasisEval t = element_basis_eval(fam.son_orders.px, fam.son_orders.py,
                                                     (x - r.x1) / w, (y - r.y1) / h);
        const int idx = t.index(i, j);
        out.value += pr.coeffs[s] * t.value[idx];
        out.dx += pr.coeffs[s] * t.grad_xi[idx] / w;
        out.dy += pr.coeffs[s] * t.grad_eta[idx] / h;
        break;  // at most one piece per point (interface points: any piece agrees)
      }
    }
    return out;
  }

  std::optional<CandidateEvaluation> select(int max_son_order = kMaxOrder) const {
    if (!have_baseline_)
      throw std::logic_error("ElementProjector: selection needs the coarse solution");
    std::optional<CandidateEvaluation> best;
    auto kind_rank = [](RefineKind k) {
      switch (k) {
        case RefineKind::PRef: return 0;
        case RefineKind::HX: return 1;
        case RefineKind::HY: return 2;
        case RefineKind::HXY: return 3;
      }
      return 4;
    };
    for (const Candidate& c : enumerate_candidates(elem_)) {
      bool admissible = true;
      for (int s = 0; s < c.refinement.son_count(); ++s)
        admissible &= c.refinement.sons[s].px <= max_son_order &&
                      c.refinement.sons[s].py <= max_son_order;
      if (!admissible) continue;
      const ProjectionResult pr = project(c);
      CandidateEvaluation ev{c, pr.error, baseline_,
                             (baseline_ - pr.error) / c.delta_ndof};
      if (!best) {
        if (ev.rate > 0) best = ev;
        continue;
      }
      const bool better =
          ev.rate > best->rate ||
          (ev.rate == best->rate &&
           (ev.candidate.delta_ndof < best->candidate.delta_ndof ||
            (ev.candidate.delta_ndof == best->candidate.delta_ndof &&
             kind_rank(ev.candidate.refinement.kind) <
                 kind_rank(best->candidate.refinement.kind))));
      if (better && ev.rate > 0) best = ev;
    }
    return best;
  }

 private:
  ElementProjector(const FeSolution* coarse, const FeSolution* fine, int elem_id)
      : elem_(fine->mesh().element(elem_id) /* placeholder, replaced below */) {
    // The element lives on the coarse mesh; when only the fine solution is
    // given, the coarse geometry is recovered from the fine mesh's parent.
    const Mesh& fmesh = fine->mesh();
    if (coarse) {
      elem_ = coarse->mesh().element(elem_id);
    } else {
      elem_ = fmesh.element(elem_id);
    }
    const Element& fparent = fmesh.element(elem_id);
    if (fparent.child_count != 4)
      throw std::invalid_argument(
          "ElementProjector: fine solution lacks the 4 fine sons of the element");
    const Orders o = elem_.orders;
    const int n1d = std::min(kMaxQuadPoints, std::max(o.px, o.py) + 3);
    const QuadratureRule& rule = gauss_rule(n1d);
    const int npts = n1d * n1d;

    // Fine quarters in SW, SE, NW, NE order with their fine elements.
    std::array<int, 4> fine_elem{};
    for (int q = 0; q < 4; ++q) fine_elem[q] = fparent.children[q];

    for (int q = 0; q < 4; ++q) {
      const Rect qr = fmesh.element(fine_elem[q]).bounds;
      weights_[q].resize(npts);
      points_[q].resize(npts, 2);
      fine_gx_[q].resize(npts);
      fine_gy_[q].resize(npts);
      coarse_gx_[q].resize(npts);
      coarse_gy_[q].resize(npts);
      int p = 0;
      for (int jy = 0; jy < n1d; ++jy) {
        for (int jx = 0; jx < n1d; ++jx, ++p) {
          const double x = qr.x1 + rule.nodes[jx] * qr.width();
          const double y = qr.y1 + rule.nodes[jy] * qr.height();
          weights_[q][p] = rule.weights[jx] * rule.weights[jy] * qr.area();
          points_[q](p, 0) = x;
          points_[q](p, 1) = y;
          const PointValue pf = fine->evaluate_in(fine_elem[q], x, y);
          fine_gx_[q][p] = pf.dx;
          fine_gy_[q][p] = pf.dy;
          if (coarse) {
            const PointValue pc = coarse->evaluate_in(elem_id, x, y);
            coarse_gx_[q][p] = pc.dx;
            coarse_gy_[q][p] = pc.dy;
          }
        }
      }
    }
    if (coarse) {
      have_baseline_ = true;
      double b2 = 0.0;
      for (int q = 0; q < 4; ++q)
        b2 += (weights_[q].array() * ((fine_gx_[q] - coarse_gx_[q]).array().square() +
                                      (fine_gy_[q] - coarse_gy_[q]).array().square()))
                  .sum();
      baseline_ = std::sqrt(std::max(0.0, b2));
    }
    for (int c = 0; c < 4; ++c) {
      const Rect& b = elem_.bounds;
      const double cx = (c % 2 == 0) ? b.x1 : b.x2;
      const double cy = (c < 2) ? b.y1 : b.y2;
      // Corner values of the fine solution (continuous there).
      int owner = fine_elem[c];
      corner_values_[c] = fine->evaluate_in(owner, cx, cy).value;
    }

    build_family(p_family_, {elem_.bounds});
    const Rect b = elem_.bounds;
    const double xm = b.xmid(), ym = b.ymid();
    build_family(hx_family_, {Rect{b.x1, b.y1, xm, b.y2}, Rect{xm, b.y1, b.x2, b.y2}});
    build_family(hy_family_, {Rect{b.x1, b.y1, b.x2, ym}, Rect{b.x1, ym, b.x2, b.y2}});
    build_family(hxy_family_, {Rect{b.x1, b.y1, xm, ym}, Rect{xm, b.y1, b.x2, ym},
                               Rect{b.x1, ym, xm, b.y2}, Rect{xm, ym, b.x2, b.y2}});
  }

  const Family& family_for(RefineKind k) const {
    switch (k) {
      case RefineKind::PRef: return p_family_;
      case RefineKind::HX: return hx_family_;
      case RefineKind::HY: return hy_family_;
      case RefineKind::HXY: return hxy_family_;
    }
    throw std::logic_error("bad refinement kind");
  }

  std::vector<int> candidate_subset(const Family& fam, const Candidate& c) const {
    // Candidate son orders aligned with the family's son enumeration; the
    // unbroken family has a single son carrying the new tensor orders.
    std::array<Orders, 4> so{};
    const int ns = static_cast<int>(fam.sons.size());
    if (c.refinement.kind == RefineKind::PRef) so[0] = c.refinement.sons[0];
    else
      for (int s = 0; s < ns; ++s) so[s] = c.refinement.sons[s];
    std::vector<int> subset;
    subset.reserve(fam.fns.size());
    for (std::size_t f = 0; f < fam.fns.size(); ++f) {
      bool keep = true;
      for (const auto& [sidx, i, j] : fam.fns[f].pieces)
        keep &= i <= so[sidx].px && j <= so[sidx].py;
      if (keep) subset.push_back(static_cast<int>(f));
    }
    return subset;
  }

  void build_family(Family& fam, std::vector<Rect> sons) {
    fam.sons = std::move(sons);
    fam.son_orders = {elem_.orders.px + 1, elem_.orders.py + 1};
    const int ns = static_cast<int>(fam.sons.size());

    // Glued basis: distinct vertices, minimum-rule edges, son interiors.
    std::map<std::pair<double, double>, int> vert_fn;
    std::map<std::tuple<int, double, double, double>, int> edge_fn_start;
    auto add_fn = [&]() {
      fam.fns.emplace_back();
      return static_cast<int>(fam.fns.size()) - 1;
    };
    for (int s = 0; s < ns; ++s) {
      const Rect& r = fam.sons[s];
      const std::array<std::pair<double, double>, 4> corners = {
          std::pair{r.x1, r.y1}, {r.x2, r.y1}, {r.x1, r.y2}, {r.x2, r.y2}};
      const std::array<std::pair<int, int>, 4> ij = {std::pair{0, 0}, {1, 0}, {0, 1}, {1, 1}};
      for (int cidx = 0; cidx < 4; ++cidx) {
        auto it = vert_fn.find(corners[cidx]);
        const int f = it == vert_fn.end() ? add_fn() : it->second;
        if (it == vert_fn.end()) vert_fn[corners[cidx]] = f;
        fam.fns[f].pieces.push_back({s, ij[cidx].first, ij[cidx].second});
      }
    }
    for (int s = 0; s < ns; ++s) {
      const Rect& r = fam.sons[s];
      struct SideDef {
        int axis;
        double line, lo, hi;
        bool horizontal;
        int fixed_ij;  // j for horizontal sides, i for vertical sides
      };
      const std::array<SideDef, 4> sides = {SideDef{0, r.x1, r.y1, r.y2, false, 0},
                                            {0, r.x2, r.y1, r.y2, false, 1},
                                            {1, r.y1, r.x1, r.x2, true, 0},
                                            {1, r.y2, r.x1, r.x2, true, 1}};
      for (const SideDef& sd : sides) {
        const int q = sd.horizontal ? fam.son_orders.px : fam.son_orders.py;
        const auto key = std::make_tuple(sd.axis, sd.line, sd.lo, sd.hi);
        auto it = edge_fn_start.find(key);
        int start;
        if (it == edge_fn_start.end()) {
          start = static_cast<int>(fam.fns.size());
          for (int k = 3; k <= q + 1; ++k) add_fn();
          edge_fn_start[key] = start;
        } else {
          start = it->second;
        }
        for (int k = 3; k <= q + 1; ++k) {
          const int i = sd.horizontal ? k - 1 : sd.fixed_ij;
          const int j = sd.horizontal ? sd.fixed_ij : k - 1;
          fam.fns[start + k - 3].pieces.push_back({s, i, j});
        }
      }
    }
    for (int s = 0; s < ns; ++s) {
      for (int j = 2; j <= fam.son_orders.py; ++j)
        for (int i = 2; i <= fam.son_orders.px; ++i) {
          const int f = add_fn();
          fam.fns[f].pieces.push_back({s, i, j});
        }
    }
    const Rect& b = elem_.bounds;
    const std::array<std::pair<double, double>, 4> kc = {
        std::pair{b.x1, b.y1}, {b.x2, b.y1}, {b.x1, b.y2}, {b.x2, b.y2}};
    for (int c = 0; c < 4; ++c) fam.corner_fn[c] = vert_fn.at(kc[c]);

    // Fine quarter -> family son (quarters in SW, SE, NW, NE order).
    for (int q = 0; q < 4; ++q) {
      const double cx = points_[q](0, 0), cy = points_[q](0, 1);
      int owner = -1;
      for (int s = 0; s < ns; ++s)
        if (fam.sons[s].contains(cx, cy)) {
          owner = s;
          break;
        }
      fam.fine_to_son[q] = owner;
    }

    // Gradient tables and family Gram/load.
    const int nfns = static_cast<int>(fam.fns.size());
    fam.gram = Eigen::MatrixXd::Zero(nfns, nfns);
    fam.load = Eigen::VectorXd::Zero(nfns);
    for (int q = 0; q < 4; ++q) {
      const int npts = static_cast<int>(weights_[q].size());
      const int sidx = fam.fine_to_son[q];
      const Rect& r = fam.sons[sidx];
      Eigen::MatrixXd& gx = fam.gradx[q];
      Eigen::MatrixXd& gy = fam.grady[q];
      gx = Eigen::MatrixXd::Zero(npts, nfns);
      gy = Eigen::MatrixXd::Zero(npts, nfns);
      const double w = r.width(), h = r.height();
      for (int p = 0; p < npts; ++p) {
        const double xi = (points_[q](p, 0) - r.x1) / w;
        const double eta = (points_[q](p, 1) - r.y1) / h;
        const TensorBasisEval t =
            element_basis_eval(fam.son_orders.px, fam.son_orders.py, xi, eta);
        for (int f = 0; f < nfns; ++f) {
          for (const auto& [fs, i, j] : fam.fns[f].pieces) {
            if (fs != sidx) continue;
            const int idx = t.index(i, j);
            gx(p, f) = t.grad_xi[idx] / w;
            gy(p, f) = t.grad_eta[idx] / h;
            break;
          }
        }
      }
      fam.gram.noalias() += gx.transpose() * weights_[q].asDiagonal() * gx;
      fam.gram.noalias() += gy.transpose() * weights_[q].asDiagonal() * gy;
      fam.load.noalias() += gx.transpose() * (weights_[q].asDiagonal() * fine_gx_[q]);
      fam.load.noalias() += gy.transpose() * (weights_[q].asDiagonal() * fine_gy_[q]);
    }
  }

  Element elem_;
  bool have_baseline_ = false;
  double baseline_ = 0;
  std::array<double, 4> corner_values_{};
  std::array<Eigen::VectorXd, 4> weights_;
  std::array<Eigen::MatrixXd, 4> points_;
  std::array<Eigen::VectorXd, 4> fine_gx_, fine_gy_, coarse_gx_, coarse_gy_;
  Family p_family_, hx_family_, hy_family_, hxy_family_;
};

inline ProjectionResult project_local(const FeSolution& fine, const Element& element,
                                      const Candidate& candidate) {
  ElementProjector proj(fine, element.id);
  return proj.project(candidate);
}

inline std::optional<CandidateEvaluation> select_optimal_refinement(
    const Element& element, const FeSolution& coarse, const FeSolution& fine,
    int max_son_order = kMaxOrder) {
  ElementProjector proj(coarse, fine, element.id);
  return proj.select(max_son_order);
}

// ---------------------------------------------------------------------------
// H1 error between two FE functions over a rectangle, by quadrature on the
// common refinement of both meshes.
// ---------------------------------------------------------------------------

namespace detail {

inline void diff_norms_rec(const FeSolution& a, const FeSolution& b, const Rect& cell,
                           int extra_points, double* semi2, double* l22) {
  const double cx = cell.xmid(), cy = cell.ymid();
  const int ea = a.mesh().find_active_at(cx, cy);
  const int eb = b.mesh().find_active_at(cx, cy);
  const Rect& ra = a.mesh().element(ea).bounds;
  const Rect& rb = b.mesh().element(eb).bounds;
  auto covers = [&](const Rect& r) {
    return r.x1 <= cell.x1 && r.x2 >= cell.x2 && r.y1 <= cell.y1 && r.y2 >= cell.y2;
  };
  if (!covers(ra) || !covers(rb)) {
    const std::array<Rect, 4> quads = {Rect{cell.x1, cell.y1, cx, cy},
                                       Rect{cx, cell.y1, cell.x2, cy},
                                       Rect{cell.x1, cy, cx, cell.y2},
                                       Rect{cx, cy, cell.x2, cell.y2}};
    for (const Rect& q : quads) diff_norms_rec(a, b, q, extra_points, semi2, l22);
    return;
  }
  const Orders oa = a.mesh().element(ea).orders, ob = b.mesh().element(eb).orders;
  const int pmax = std::max({oa.px, oa.py, ob.px, ob.py});
  const int n1d = std::min(kMaxQuadPoints, pmax + 3 + extra_points);
  const QuadratureRule& rule = gauss_rule(n1d);
  for (int jy = 0; jy < n1d; ++jy) {
    for (int jx = 0; jx < n1d; ++jx) {
      const double x = cell.x1 + rule.nodes[jx] * cell.width();
      const double y = cell.y1 + rule.nodes[jy] * cell.height();
      const double w = rule.weights[jx] * rule.weights[jy] * cell.area();
      const PointValue pa = a.evaluate_in(ea, x, y);
      const PointValue pb = b.evaluate_in(eb, x, y);
      *semi2 += w * ((pa.dx - pb.dx) * (pa.dx - pb.dx) + (pa.dy - pb.dy) * (pa.dy - pb.dy));
      *l22 += w * (pa.value - pb.value) * (pa.value - pb.value);
    }
  }
}

struct DiffNorms {
  double semi2 = 0;  // squared H1 seminorm of the difference
  double l22 = 0;    // squared L2 norm of the difference
};

inline DiffNorms element_diff_norms(const FeSolution& a, const FeSolution& b,
                                    const Rect& cell, int extra_points = 0) {
  DiffNorms out;
  diff_norms_rec(a, b, cell, extra_points, &out.semi2, &out.l22);
  return out;
}

}  // namespace detail

// H1 seminorm of (a - b) over the element, by quadrature on the common
// refinement of both meshes. extra_points refines the rule for convergence
// checks.
inline double element_h1_error(const FeSolution& a, const FeSolution& b,
                               const Element& element, int extra_points = 0) {
  const detail::DiffNorms n = detail::element_diff_norms(a, b, element.bounds, extra_points);
  return std::sqrt(std::max(0.0, n.semi2));
}

}  // namespace hpfem
