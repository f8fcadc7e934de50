#pragma once

// Self-adaptive and predictor-driven refinement loops on the L-shaped
// benchmark, plus the error metrics and convergence reporting they share.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hpfem/assemble.hpp"
#include "hpfem/dataset.hpp"
#include "hpfem/estimate.hpp"
#include "hpfem/solve.hpp"

namespace hpfem {

// ---------------------------------------------------------------------------
// L-shaped benchmark: Laplace with u = r^{2/3} sin(2 theta/3 + pi/3), the
// angle in (-pi/2, pi]. Homogeneous Dirichlet on the two reentrant legs,
// exact Neumann flux elsewhere.
// ---------------------------------------------------------------------------

inline double lshape_exact(double x, double y) {
  const double r = std::hypot(x, y);
  if (r == 0.0) return 0.0;
  const double theta = std::atan2(y, x);
  return std::pow(r, 2.0 / 3.0) * std::sin(2.0 * theta / 3.0 + M_PI / 3.0);
}

inline std::array<double, 2> lshape_exact_grad(double x, double y) {
  const double r = std::hypot(x, y);
  if (r == 0.0) throw std::domain_error("lshape_exact_grad: singular at the origin");
  const double theta = std::atan2(y, x);
  const double s = 2.0 / 3.0 * std::pow(r, -1.0 / 3.0);
  return {s * std::sin(M_PI / 3.0 - theta / 3.0), s * std::cos(M_PI / 3.0 - theta / 3.0)};
}

inline Problem lshape_problem() {
  Problem p;
  p.is_dirichlet = [](double x, double y) {
    return (x == 0.0 && y <= 0.0) || (y == 0.0 && x <= 0.0);
  };
  p.dirichlet_value = [](double, double) { return 0.0; };
  p.neumann = [](double x, double y, double nx, double ny) {
    const std::array<double, 2> g = lshape_exact_grad(x, y);
    return g[0] * nx + g[1] * ny;
  };
  p.exact = lshape_exact;
  p.exact_grad = lshape_exact_grad;
  return p;
}

// ---------------------------------------------------------------------------
// Error metrics
// ---------------------------------------------------------------------------

namespace detail {

template <class F>
inline void quad_cell(const Rect& cell, int n1d, F&& f) {
  const QuadratureRule& rule = gauss_rule(n1d);
  for (int jy = 0; jy < n1d; ++jy)
    for (int jx = 0; jx < n1d; ++jx)
      f(cell.x1 + rule.nodes[jx] * cell.width(), cell.y1 + rule.nodes[jy] * cell.height(),
        rule.weights[jx] * rule.weights[jy] * cell.area());
}

// Dyadic grading toward the origin, where the exact gradient blows up.
template <class F>
inline void quad_graded(const Rect& cell, int n1d, int depth, F&& f) {
  if (!cell.contains(0.0, 0.0) || depth >= 48 || cell.width() <= 1e-12) {
    quad_cell(cell, n1d, f);
    return;
  }
  const double xm = cell.xmid(), ym = cell.ymid();
  quad_graded(Rect{cell.x1, cell.y1, xm, ym}, n1d, depth + 1, f);
  quad_graded(Rect{xm, cell.y1, cell.x2, ym}, n1d, depth + 1, f);
  quad_graded(Rect{cell.x1, ym, xm, cell.y2}, n1d, depth + 1, f);
  quad_graded(Rect{xm, ym, cell.x2, cell.y2}, n1d, depth + 1, f);
}

}  // namespace detail

// Full H1 norm of an FE function over its mesh.
inline double solution_h1_norm(const FeSolution& u) {
  double acc = 0.0;
  for (int id : u.mesh().active_ids()) {
    const Element& el = u.mesh().element(id);
    const int n1d = std::min(kMaxQuadPoints, std::max(el.orders.px, el.orders.py) + 3);
    detail::quad_cell(el.bounds, n1d, [&](double x, double y, double w) {
      const PointValue p = u.evaluate_in(id, x, y);
      acc += w * (p.value * p.value + p.dx * p.dx + p.dy * p.dy);
    });
  }
  return std::sqrt(std::max(0.0, acc));
}

// Per-element coarse-vs-fine error norms driving both the stopping metric
// and the refinement threshold.
struct ElementErrors {
  std::vector<int> ids;            // coarse active ids, ascending
  std::vector<double> seminorm;    // |u_fine - u_hp|_{H1(K)}
  std::vector<double> full_norm;   // ||u_fine - u_hp||_{H1(K)}
  double fine_norm = 0;            // ||u_fine||_{H1(Omega)}
};

inline ElementErrors compute_element_errors(const FeSolution& coarse,
                                            const FeSolution& fine) {
  ElementErrors out;
  for (int id : coarse.mesh().active_ids()) {
    const detail::DiffNorms dn =
        detail::element_diff_norms(fine, coarse, coarse.mesh().element(id).bounds);
    out.ids.push_back(id);
    out.seminorm.push_back(std::sqrt(std::max(0.0, dn.semi2)));
    out.full_norm.push_back(std::sqrt(std::max(0.0, dn.semi2 + dn.l22)));
  }
  out.fine_norm = solution_h1_norm(fine);
  return out;
}

// max over coarse elements of 100 ||u_fine - u_hp||_{H1(K)} / ||u_fine||_{H1}.
inline double max_rel_error(const FeSolution& coarse, const FeSolution& fine) {
  const ElementErrors e = compute_element_errors(coarse, fine);
  if (!(e.fine_norm > 0.0))
    throw std::runtime_error("max_rel_error: fine solution has zero norm");
  double worst = 0.0;
  for (double v : e.full_norm) worst = std::max(worst, v);
  return 100.0 * worst / e.fine_norm;
}

// H1-seminorm of the exact solution over the mesh, graded toward the origin.
inline double exact_h1_seminorm(const Problem& prob, const Mesh& mesh,
                                int extra_order = 0) {
  if (!prob.exact_grad) throw std::invalid_argument("exact_h1_seminorm: no exact gradient");
  double acc = 0.0;
  for (int id : mesh.active_ids()) {
    const Element& el = mesh.element(id);
    int n1d = std::min(kMaxQuadPoints,
                       std::max(el.orders.px, el.orders.py) + 3 + extra_order);
    if (el.bounds.contains(0.0, 0.0)) n1d = std::min(kMaxQuadPoints, 2 * n1d);
    detail::quad_graded(el.bounds, n1d, 0, [&](double x, double y, double w) {
      const std::array<double, 2> g = prob.exact_grad(x, y);
      acc += w * (g[0] * g[0] + g[1] * g[1]);
    });
  }
  return std::sqrt(std::max(0.0, acc));
}

// 100 |u_ex - u_h|_{H1} / |u_ex|_{H1}; origin-touching elements use doubled
// quadrature order and dyadic grading.
inline double exact_h1_error(const FeSolution& sol, const Problem& prob,
                             int extra_order = 0) {
  if (!prob.exact_grad) throw std::invalid_argument("exact_h1_error: no exact gradient");
  double num = 0.0, den = 0.0;
  for (int id : sol.mesh().active_ids()) {
    const Element& el = sol.mesh().element(id);
    int n1d = std::min(kMaxQuadPoints,
                       std::max(el.orders.px, el.orders.py) + 3 + extra_order);
    if (el.bounds.contains(0.0, 0.0)) n1d = std::min(kMaxQuadPoints, 2 * n1d);
    detail::quad_graded(el.bounds, n1d, 0, [&](double x, double y, double w) {
      const std::array<double, 2> g = prob.exact_grad(x, y);
      const PointValue p = sol.evaluate_in(id, x, y);
      num += w * ((g[0] - p.dx) * (g[0] - p.dx) + (g[1] - p.dy) * (g[1] - p.dy));
      den += w * (g[0] * g[0] + g[1] * g[1]);
    });
  }
  if (!(den > 0.0)) throw std::runtime_error("exact_h1_error: exact solution has zero norm");
  return 100.0 * std::sqrt(num / den);
}

// ---------------------------------------------------------------------------
// Adaptive loops
// ---------------------------------------------------------------------------

struct AdaptConfig {
  int max_iterations = 20;
  double accuracy_pct = 1.0;   // stop once max_rel_error drops below this
  double threshold = 0.33;     // evaluate elements within this fraction of the max error
  int initial_order = 2;
  std::string dataset_path;    // where callers persist the decision rows
};

inline void validate_config(const AdaptConfig& c) {
  if (c.max_iterations < 0) throw std::invalid_argument("config: negative iteration count");
  if (!(c.accuracy_pct >= 0.0)) throw std::invalid_argument("config: negative accuracy");
  if (!(c.threshold >= 0.0 && c.threshold <= 1.0))
    throw std::invalid_argument("config: threshold outside [0,1]");
  if (c.initial_order < 1 || c.initial_order > kMaxOrder - 1)
    throw std::invalid_argument("config: initial order outside 1..8");
}

struct ConvergenceRecord {
  int iter = 0;
  int ndof_coarse = 0;
  int ndof_fine = 0;  // zero in predictor-driven mode
  double energy_coarse = 0;
  double energy_fine = 0;
  double max_rel_err_pct = 0;
  double exact_h1_err_pct = 0;
};

struct AdaptResult {
  Mesh mesh;
  std::vector<ConvergenceRecord> records;
  std::vector<DecisionRecord> dataset;
  std::string stop_reason;
};

using SnapshotCallback = std::function<void(int iter, const Mesh&)>;

// Two-grid self-adaptive loop. Per iteration: solve coarse and uniformly
// refined fine grids, stop if the max relative error meets the accuracy,
// otherwise select and apply the optimal refinement for every element whose
// error is within `threshold` of the worst one, logging each decision.
inline AdaptResult self_adaptive_loop(const AdaptConfig& config, const Problem& problem,
                                      const SnapshotCallback& on_refined = {}) {
  validate_config(config);
  AdaptResult result{create_initial_mesh(config.initial_order), {}, {}, "iteration limit"};
  Mesh& mesh = result.mesh;

  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    DofMap dmc = build_dof_map(mesh, problem);
    SparseSystem sysc = assemble_system(mesh, dmc, problem);
    Eigen::VectorXd xc = solve_system(sysc);
    const double energy_c = energy_norm(sysc, xc);
    const FeSolution coarse(mesh, std::move(dmc), std::move(xc));

    const Mesh fine_mesh = uniform_refine(mesh);
    DofMap dmf = build_dof_map(fine_mesh, problem);
    SparseSystem sysf = assemble_system(fine_mesh, dmf, problem);
    Eigen::VectorXd xf = solve_system(sysf);
    const double energy_f = energy_norm(sysf, xf);
    const FeSolution fine(fine_mesh, std::move(dmf), std::move(xf));

    const ElementErrors errors = compute_element_errors(coarse, fine);
    if (!(errors.fine_norm > 0.0))
      throw std::runtime_error("self_adaptive_loop: fine solution has zero norm");
    double max_full = 0.0, max_semi = 0.0;
    for (std::size_t k = 0; k < errors.ids.size(); ++k) {
      max_full = std::max(max_full, errors.full_norm[k]);
      max_semi = std::max(max_semi, errors.seminorm[k]);
    }
    const double max_rel = 100.0 * max_full / errors.fine_norm;
    const double exact_pct =
        problem.exact_grad ? exact_h1_error(coarse, problem) : 0.0;

    result.records.push_back({iter, coarse.dofmap().n_dofs, fine.dofmap().n_dofs,
                              energy_c, energy_f, max_rel, exact_pct});
    if (max_rel < config.accuracy_pct) {
      result.stop_reason = "accuracy reached";
      break;
    }

    // Selection on the frozen mesh, then one ascending application pass.
    // Below-threshold elements still contribute an explicit keep decision so
    // the dataset teaches when not to refine. Elements consumed by
    // 1-irregularity propagation are skipped.
    const double tau = config.threshold * max_semi;
    std::vector<std::pair<int, std::optional<CandidateEvaluation>>> decisions;
    for (std::size_t k = 0; k < errors.ids.size(); ++k) {
      const int id = errors.ids[k];
      if (errors.seminorm[k] < tau)
        decisions.emplace_back(id, std::nullopt);
      else
        decisions.emplace_back(
            id, select_optimal_refinement(mesh.element(id), coarse, fine, kMaxOrder - 1));
    }
    int applied = 0;
    for (const auto& [id, decision] : decisions) {
      if (!mesh.element(id).active()) continue;
      result.dataset.push_back(encode_output(decision, mesh.element(id)));
      if (decision) {
        mesh.refine_element(id, decision->candidate.refinement);
        ++applied;
      }
    }
    if (applied > 0 && on_refined) on_refined(iter, mesh);
    if (applied == 0) {
      result.stop_reason = "no refinements";
      break;
    }
  }
  return result;
}

// A refinement source for the predictor-driven loop: nullopt leaves the
// element unchanged.
using RefinementPredictor = std::function<std::optional<Refinement>(const Element&)>;

struct PredictorLoopResult {
  Mesh mesh;
  std::vector<ConvergenceRecord> records;
};

// Solver-free refinement loop: every active element is refined as the
// predictor dictates; no fine mesh is ever built. When solve_each is set the
// coarse problem is solved once per iteration to log energy and exact error.
inline PredictorLoopResult predictor_driven_loop(const AdaptConfig& config,
                                                 const Problem& problem,
                                                 const RefinementPredictor& predict,
                                                 Mesh start_mesh, int start_iter = 1,
                                                 bool solve_each = true,
                                                 const SnapshotCallback& on_refined = {}) {
  validate_config(config);
  if (!predict) throw std::invalid_argument("predictor_driven_loop: empty predictor");
  PredictorLoopResult result{std::move(start_mesh), {}};
  Mesh& mesh = result.mesh;

  for (int step = 0; step < config.max_iterations; ++step) {
    const int iter = start_iter + step;
    ConvergenceRecord rec;
    rec.iter = iter;
    if (solve_each) {
      DofMap dm = build_dof_map(mesh, problem);
      SparseSystem sys = assemble_system(mesh, dm, problem);
      Eigen::VectorXd x = solve_system(sys);
      rec.energy_coarse = energy_norm(sys, x);
      rec.ndof_coarse = dm.n_dofs;
      const FeSolution sol(mesh, std::move(dm), std::move(x));
      rec.exact_h1_err_pct = problem.exact_grad ? exact_h1_error(sol, problem) : 0.0;
    } else {
      rec.ndof_coarse = build_dof_map(mesh, problem).n_dofs;
    }
    result.records.push_back(rec);

    std::vector<std::pair<int, Refinement>> todo;
    for (int id : mesh.active_ids()) {
      const std::optional<Refinement> r = predict(mesh.element(id));
      if (r) todo.emplace_back(id, *r);
    }
    int applied = 0;
    for (const auto& [id, r] : todo) {
      if (!mesh.element(id).active()) continue;
      mesh.refine_element(id, r);
      ++applied;
    }
    if (applied > 0 && on_refined) on_refined(iter, mesh);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Convergence CSV and the exponential-convergence fit
// ---------------------------------------------------------------------------

inline constexpr const char* kConvergenceHeader =
    "iter,ndof_coarse,ndof_fine,energy_coarse,energy_fine,max_rel_err_pct,exact_h1_err_pct";

inline void write_convergence_csv(const std::vector<ConvergenceRecord>& records,
                                  std::ostream& out) {
  out << kConvergenceHeader << "\n";
  for (const ConvergenceRecord& r : records) {
    out << r.iter << ',' << r.ndof_coarse << ',' << r.ndof_fine << ','
        << detail::g17(r.energy_coarse) << ',' << detail::g17(r.energy_fine) << ','
        << detail::g17(r.max_rel_err_pct) << ',' << detail::g17(r.exact_h1_err_pct)
        << "\n";
  }
}

inline void write_convergence_csv(const std::vector<ConvergenceRecord>& records,
                                  const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_convergence_csv(records, out);
}

inline std::vector<ConvergenceRecord> read_convergence_csv(std::istream& in,
                                                           const std::string& origin = "") {
  const std::string suffix = origin.empty() ? "" : " in " + origin;
  std::string line;
  if (!std::getline(in, line) || line != kConvergenceHeader)
    throw std::runtime_error("malformed convergence header at line 1" + suffix);
  std::vector<ConvergenceRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    ConvergenceRecord r;
    if (!(ss >> r.iter >> r.ndof_coarse >> r.ndof_fine >> r.energy_coarse >>
          r.energy_fine >> r.max_rel_err_pct >> r.exact_h1_err_pct))
      throw std::runtime_error("malformed convergence row at line " +
                               std::to_string(lineno) + suffix);
    out.push_back(r);
  }
  return out;
}

inline std::vector<ConvergenceRecord> read_convergence_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_convergence_csv(in, path);
}

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
  int n = 0;
};

// Least-squares line; undefined for fewer than 3 points or constant x.
inline std::optional<LinearFit> fit_line(const std::vector<double>& x,
                                         const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("fit_line: length mismatch");
  const int n = static_cast<int>(x.size());
  if (n < 3) return std::nullopt;
  double sx = 0, sy = 0;
  for (int i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) return std::nullopt;
  LinearFit fit;
  fit.n = n;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double ss_res = syy - fit.slope * sxy;
  fit.r2 = syy > 0.0 ? 1.0 - std::max(0.0, ss_res) / syy : 1.0;
  return fit;
}

// ln(error) against ndof^{1/3}: the exponential-convergence diagnostic.
inline std::optional<LinearFit> fit_convergence(const std::vector<ConvergenceRecord>& recs) {
  std::vector<double> x, y;
  for (const ConvergenceRecord& r : recs) {
    if (!(r.exact_h1_err_pct > 0.0)) continue;
    x.push_back(std::cbrt(static_cast<double>(r.ndof_coarse)));
    y.push_back(std::log(r.exact_h1_err_pct));
  }
  return fit_line(x, y);
}

}  // namespace hpfem
