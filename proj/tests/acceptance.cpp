// End-to-end acceptance gate for the hp-adaptive pipeline. Each criterion
// prints exactly one PASS/FAIL line with its measured quantities and pinned
// thresholds; the process exits 0 only when every criterion passes.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hpfem/dnn.hpp"
#include "hpfem/driver.hpp"
#include "hpfem/estimate.hpp"
#include "oracle.hpp"

using namespace hpfem;

namespace {

// Pinned tolerances and budgets.
constexpr double kAffineRelTol = 1e-10;  // criterion 1: relative H1 error
constexpr double kBudget1Sec = 5.0;
constexpr int kRefinedMeshMin = 50;
constexpr double kTargetErrPct = 1.0;  // criterion 2
constexpr double kFitR2Min = 0.95;
constexpr double kBudget2Sec = 600.0;
constexpr int kCandidateCount = 291;  // criterion 3: candidates per (2,2) element
constexpr double kBudget3Sec = 30.0;
constexpr double kProjExactTol = 1e-10;  // criterion 4
constexpr double kNestSlack = 1e-12;
constexpr int kSeededCases = 100;
constexpr double kAccHMin = 0.90;  // criterion 5
constexpr double kAccSonMin = 0.85;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradScaleFloor = 1e-6;
constexpr double kLossMonoMin = 0.90;
constexpr double kLossPlateauTol = 0.01;  // increases within 1% count as plateau
constexpr double kBudget5Sec = 300.0;
constexpr unsigned kTrainSeed = 9;
constexpr int kHybridIters = 10;  // criterion 6
constexpr int kHybridMinNonIncr = 8;
constexpr double kHybridR2Min = 0.90;
constexpr double kEnergySlack = 1e-12;  // criterion 8
constexpr std::array<double, 4> kUnitWeights{1.0, 1.0, 1.0, 1.0};

using Clock = std::chrono::steady_clock;

double elapsed_s(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Artifacts shared between criteria, plus the audit and energy accumulators
// that criterion 8 settles at the end.
struct SharedState {
  long audits = 0;
  long violations = 0;
  std::vector<double> coarse_energies;  // criterion 2 chain incl. final solve
  std::optional<AdaptResult> adapt;     // criterion 2 artifacts
  double err_after_20 = 0.0;
  dnn::Model initial_model;
  std::optional<dnn::TrainResult> trained;
};

void note_audit(SharedState& s, const Mesh& m) {
  ++s.audits;
  s.violations += static_cast<long>(m.audit().violations.size());
}

Problem all_dirichlet(std::function<double(double, double)> u) {
  Problem p;
  p.is_dirichlet = [](double, double) { return true; };
  p.dirichlet_value = std::move(u);
  return p;
}

FeSolution solve_on(const Mesh& mesh, const Problem& prob) {
  DofMap dm = build_dof_map(mesh, prob);
  SparseSystem sys = assemble_system(mesh, dm, prob);
  return FeSolution(mesh, std::move(dm), solve_system(sys));
}

// Meshes live on the heap: solutions keep pointers to them.
struct SolvedPair {
  std::unique_ptr<Mesh> coarse_mesh, fine_mesh;
  std::unique_ptr<FeSolution> coarse, fine;
};

SolvedPair solve_pair(Mesh mesh, const Problem& prob) {
  SolvedPair sp;
  sp.coarse_mesh = std::make_unique<Mesh>(std::move(mesh));
  sp.fine_mesh = std::make_unique<Mesh>(uniform_refine(*sp.coarse_mesh));
  sp.coarse = std::make_unique<FeSolution>(solve_on(*sp.coarse_mesh, prob));
  sp.fine = std::make_unique<FeSolution>(solve_on(*sp.fine_mesh, prob));
  return sp;
}

// --------------------------------------------------------------------------
// Criterion 1: an affine solution is reproduced to machine precision on the
// initial mesh at several orders and on a randomly refined mesh with mixed
// refinement kinds and orders.
// --------------------------------------------------------------------------
bool criterion1(SharedState& s) {
  const auto t0 = Clock::now();
  const double c0 = 0.7, cx = -0.3, cy = 0.45;
  Problem prob = all_dirichlet([=](double x, double y) { return c0 + cx * x + cy * y; });
  prob.exact = [=](double x, double y) { return c0 + cx * x + cy * y; };
  prob.exact_grad = [=](double, double) { return std::array<double, 2>{cx, cy}; };

  auto rel_err = [&](const Mesh& m) {
    const FeSolution sol = solve_on(m, prob);
    return exact_h1_error(sol, prob) / 100.0;
  };

  double worst_initial = 0.0;
  for (int p = 1; p <= 3; ++p) {
    const Mesh m = create_initial_mesh(p);
    note_audit(s, m);
    worst_initial = std::max(worst_initial, rel_err(m));
  }

  // Seeded random refinement mixing all four kinds and order bumps.
  std::mt19937 rng(20260814u);
  Mesh m = create_initial_mesh(2);
  int attempts = 0;
  while (m.active_count() < kRefinedMeshMin) {
    if (++attempts > 10000) throw std::runtime_error("criterion 1: refinement stalled");
    const std::vector<int> ids = m.active_ids();
    const int id = static_cast<int>(ids[rng() % ids.size()]);
    const Orders po = m.element(id).orders;
    auto bump = [&](Orders o) {
      return Orders{std::min(kMaxOrder, o.px + static_cast<int>(rng() % 2)),
                    std::min(kMaxOrder, o.py + static_cast<int>(rng() % 2))};
    };
    const unsigned kind = rng() % 4;
    if (kind == 0) {
      Orders o = po;
      if (rng() % 2) o.px += 1;
      else o.py += 1;
      if (o.px > kMaxOrder || o.py > kMaxOrder) continue;
      m.refine_element(id, Refinement::p_ref(o));
    } else if (kind == 1) {
      m.refine_element(id, Refinement::h_x(bump(po), bump(po)));
    } else if (kind == 2) {
      m.refine_element(id, Refinement::h_y(bump(po), bump(po)));
    } else {
      m.refine_element(id, Refinement::h_xy(bump(po), bump(po), bump(po), bump(po)));
    }
    note_audit(s, m);
  }
  const double err_refined = rel_err(m);

  const double dt = elapsed_s(t0);
  const bool pass = worst_initial <= kAffineRelTol && err_refined <= kAffineRelTol &&
                    dt < kBudget1Sec;
  std::printf(
      "criterion 1: %s  affine patch test: rel H1 err %.2e (initial, p=1..3), "
      "%.2e (%d-element random mesh) [tol %.0e], %.1fs\n",
      pass ? "PASS" : "FAIL", worst_initial, err_refined, m.active_count(),
      kAffineRelTol, dt);
  return pass;
}

// --------------------------------------------------------------------------
// Criterion 2: 20 self-adaptive iterations reach < 1% exact relative H1
// error with an exponential convergence fit. Accuracy 0 disables the early
// stop so the full 20 iterations always run.
// --------------------------------------------------------------------------
bool criterion2(SharedState& s) {
  const auto t0 = Clock::now();
  AdaptConfig cfg;
  cfg.max_iterations = 20;
  cfg.accuracy_pct = 0.0;
  cfg.threshold = 0.33;
  cfg.initial_order = 2;
  const Problem prob = lshape_problem();
  AdaptResult r =
      self_adaptive_loop(cfg, prob, [&s](int, const Mesh& m) { note_audit(s, m); });

  for (const ConvergenceRecord& rec : r.records)
    s.coarse_energies.push_back(rec.energy_coarse);
  const auto fit = fit_convergence(r.records);
  const std::size_t n_records = r.records.size();
  const std::size_t n_rows = r.dataset.size();
  s.adapt = std::move(r);

  // One extra solve on the final refined mesh: its error is the criterion's
  // target and its energy extends the criterion 8 chain.
  DofMap dm = build_dof_map(s.adapt->mesh, prob);
  SparseSystem sys = assemble_system(s.adapt->mesh, dm, prob);
  Eigen::VectorXd x = solve_system(sys);
  s.coarse_energies.push_back(energy_norm(sys, x));
  const FeSolution sol(s.adapt->mesh, std::move(dm), std::move(x));
  s.err_after_20 = exact_h1_error(sol, prob);

  const double dt = elapsed_s(t0);
  const bool pass = n_records == 20 && s.err_after_20 < kTargetErrPct && fit &&
                    fit->slope < 0.0 && fit->r2 >= kFitR2Min && dt < kBudget2Sec;
  std::printf(
      "criterion 2: %s  exponential convergence: exact err %.3f%% after 20 "
      "iterations (target <%.0f%%), fit slope %.3f r2 %.4f (min %.2f), %zu "
      "dataset rows, %.1fs\n",
      pass ? "PASS" : "FAIL", s.err_after_20, kTargetErrPct, fit ? fit->slope : 0.0,
      fit ? fit->r2 : 0.0, kFitR2Min, n_rows, dt);
  return pass;
}

// --------------------------------------------------------------------------
// Criterion 3: the production selector and the independent brute-force
// evaluator pick the identical candidate on every element of a 4-element
// mesh refined one level into the reentrant corner.
// --------------------------------------------------------------------------
bool criterion3(SharedState& s) {
  const auto t0 = Clock::now();
  Mesh m = create_initial_mesh(2);
  m.refine_element(1, Refinement::h_x({2, 2}, {2, 2}));
  note_audit(s, m);
  SolvedPair sp = solve_pair(std::move(m), lshape_problem());

  int checked = 0;
  bool agree = true;
  for (int id : sp.coarse_mesh->active_ids()) {
    const Element& el = sp.coarse_mesh->element(id);
    if (static_cast<int>(enumerate_candidates(el).size()) != kCandidateCount ||
        static_cast<int>(oracle::enumerate_ref(el.orders).size()) != kCandidateCount) {
      agree = false;
      continue;
    }
    const auto got = select_optimal_refinement(el, *sp.coarse, *sp.fine);
    const auto ref = oracle::select_ref(*sp.coarse, *sp.fine, id);
    bool same = got.has_value() == ref.has_value();
    if (same && got) {
      same = got->candidate.refinement.kind == ref->cand.kind &&
             got->candidate.delta_ndof == ref->cand.delta;
      for (int k = 0; same && k < got->candidate.refinement.son_count(); ++k)
        same = got->candidate.refinement.sons[k] == ref->cand.sons[k];
    }
    agree = agree && same;
    ++checked;
  }

  const double dt = elapsed_s(t0);
  const bool pass =
      agree && checked == static_cast<int>(sp.coarse_mesh->active_count()) &&
      checked == 4 && dt < kBudget3Sec;
  std::printf(
      "criterion 3: %s  oracle equivalence: %d/%d elements agree exactly over "
      "%d candidates each, %.1fs\n",
      pass ? "PASS" : "FAIL", agree ? checked : 0, checked, kCandidateCount, dt);
  return pass;
}

// --------------------------------------------------------------------------
// Criterion 4: projection exactness for fine solutions lying in a candidate
// space, and error monotonicity along nested candidate chains.
// --------------------------------------------------------------------------
const Candidate* find_candidate(const std::vector<Candidate>& cands, RefineKind kind,
                                const std::array<Orders, 4>& sons, int nsons) {
  for (const Candidate& c : cands) {
    if (c.refinement.kind != kind) continue;
    bool same = true;
    for (int i = 0; i < nsons; ++i) same = same && c.refinement.sons[i] == sons[i];
    if (same) return &c;
  }
  return nullptr;
}

bool criterion4(SharedState& s) {
  const auto t0 = Clock::now();

  // Harmonic library with the directional polynomial degree each term needs.
  struct Term {
    int need_x, need_y;
    double (*f)(double, double);
  };
  static const std::array<Term, 7> lib = {{
      {0, 0, [](double, double) { return 1.0; }},
      {1, 0, [](double x, double) { return x; }},
      {0, 1, [](double, double y) { return y; }},
      {1, 1, [](double x, double y) { return x * y; }},
      {2, 2, [](double x, double y) { return x * x - y * y; }},
      {3, 2, [](double x, double y) { return x * x * x - 3.0 * x * y * y; }},
      {2, 3, [](double x, double y) { return 3.0 * x * x * y - y * y * y; }},
  }};

  // Exactness: 50 seeded cases. The fine Galerkin solution of a harmonic
  // polynomial representable in the fine space is that polynomial, so any
  // candidate space containing it must project with vanishing error.
  int n_exact = 0;
  double worst_exact = 0.0;
  for (unsigned c = 0; c < 50; ++c) {
    std::mt19937 g(1000u + c);
    Mesh cm = create_initial_mesh(1 + static_cast<int>(g() % 2));
    const int extra = static_cast<int>(g() % 3);
    for (int i = 0; i < extra; ++i) {
      const std::vector<int> ids = cm.active_ids();
      const int id = static_cast<int>(ids[g() % ids.size()]);
      const Orders po = cm.element(id).orders;
      const unsigned k = g() % 3;
      if (k == 0) cm.refine_element(id, Refinement::h_x(po, po));
      else if (k == 1) cm.refine_element(id, Refinement::h_y(po, po));
      else cm.refine_element(id, Refinement::h_xy(po, po, po, po));
    }
    note_audit(s, cm);

    const std::vector<int> ids = cm.active_ids();
    const int id = static_cast<int>(ids[g() % ids.size()]);
    const std::vector<Candidate> cands = enumerate_candidates(cm.element(id));
    const Candidate cand = cands[g() % cands.size()];

    int mpx = kMaxOrder, mpy = kMaxOrder;
    for (int k = 0; k < cand.refinement.son_count(); ++k) {
      mpx = std::min(mpx, cand.refinement.sons[k].px);
      mpy = std::min(mpy, cand.refinement.sons[k].py);
    }
    int fx = kMaxOrder, fy = kMaxOrder;
    for (int aid : cm.active_ids()) {
      fx = std::min(fx, cm.element(aid).orders.px + 1);
      fy = std::min(fy, cm.element(aid).orders.py + 1);
    }
    const int ax = std::min(mpx, fx), ay = std::min(mpy, fy);

    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    std::vector<std::pair<double, const Term*>> terms;
    for (const Term& t : lib)
      if (t.need_x <= ax && t.need_y <= ay) terms.emplace_back(coef(g), &t);
    const Problem prob = all_dirichlet([terms](double x, double y) {
      double v = 0.0;
      for (const auto& [w, t] : terms) v += w * t->f(x, y);
      return v;
    });

    const Mesh fm = uniform_refine(cm);
    const FeSolution fine = solve_on(fm, prob);
    ElementProjector proj(fine, id);
    worst_exact = std::max(worst_exact, proj.project(cand).error);
    ++n_exact;
  }

  // Monotonicity: 50 seeded chains on one solved singular pair. Raising any
  // son order yields a nested space, so the projection error cannot grow.
  Mesh mm = create_initial_mesh(2);
  mm.refine_element(1, Refinement::h_x({2, 2}, {2, 2}));
  note_audit(s, mm);
  SolvedPair sp = solve_pair(std::move(mm), lshape_problem());
  const std::vector<int> mids = sp.coarse_mesh->active_ids();

  int n_chain = 0, n_links = 0;
  double worst_rise = 0.0;
  for (unsigned c = 0; c < 50; ++c) {
    std::mt19937 g(5000u + c);
    const int id = static_cast<int>(mids[g() % mids.size()]);
    const std::vector<Candidate> cands = enumerate_candidates(sp.coarse_mesh->element(id));
    ElementProjector proj(*sp.coarse, *sp.fine, id);

    const Candidate* cur = &cands[g() % cands.size()];
    double prev = proj.project(*cur).error;
    for (int link = 0; link < 4; ++link) {
      // Collect every single-axis son-order raise that stays inside the
      // enumerated lattice, then step to a random one.
      const int nsons = cur->refinement.son_count();
      std::vector<const Candidate*> nexts;
      for (int si = 0; si < nsons; ++si) {
        for (int axis = 0; axis < 2; ++axis) {
          std::array<Orders, 4> want = cur->refinement.sons;
          if (axis == 0) want[si].px += 1;
          else want[si].py += 1;
          if (const Candidate* n =
                  find_candidate(cands, cur->refinement.kind, want, nsons))
            nexts.push_back(n);
        }
      }
      if (nexts.empty()) break;  // already at the lattice top
      const Candidate* next = nexts[g() % nexts.size()];
      const double err = proj.project(*next).error;
      worst_rise = std::max(worst_rise, err - prev);
      ++n_links;
      cur = next;
      prev = err;
    }
    ++n_chain;
  }

  const double dt = elapsed_s(t0);
  const bool pass = worst_exact <= kProjExactTol && worst_rise <= kNestSlack &&
                    n_exact + n_chain >= kSeededCases && n_links >= 50;
  std::printf(
      "criterion 4: %s  projection: exactness worst err %.2e over %d cases "
      "[tol %.0e], worst nested-chain rise %.2e over %d links [slack %.0e], "
      "%.1fs\n",
      pass ? "PASS" : "FAIL", worst_exact, n_exact, kProjExactTol, worst_rise,
      n_links, kNestSlack, dt);
  return pass;
}

// --------------------------------------------------------------------------
// Criterion 5: train on the criterion 2 dataset with the default
// configuration and a fixed seed; check held-out accuracies, training-loss
// monotonicity, and backpropagation against central finite differences.
// --------------------------------------------------------------------------
double grad_check(const dnn::Model& model, const std::vector<dnn::TrainSample>& batch) {
  dnn::Model m = model;
  dnn::Gradients gr;
  dnn::loss_and_gradient(m, batch, kUnitWeights, &gr);
  const double h = 1e-5;
  double worst = 0.0;
  auto probe = [&](double& theta, double analytic) {
    const double saved = theta;
    theta = saved + h;
    const double lp = dnn::loss_and_gradient(m, batch, kUnitWeights, nullptr);
    theta = saved - h;
    const double lm = dnn::loss_and_gradient(m, batch, kUnitWeights, nullptr);
    theta = saved;
    const double fd = (lp - lm) / (2.0 * h);
    const double scale = std::max(std::abs(analytic), std::abs(fd));
    if (scale > kGradScaleFloor)
      worst = std::max(worst, std::abs(analytic - fd) / scale);
  };
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    Eigen::MatrixXd& w = m.layers[l].W;
    Eigen::VectorXd& b = m.layers[l].b;
    for (Eigen::Index j = 0; j < w.size(); ++j) probe(w.data()[j], gr.g[l].W.data()[j]);
    for (Eigen::Index j = 0; j < b.size(); ++j) probe(b.data()[j], gr.g[l].b.data()[j]);
  }
  return worst;
}

bool criterion5(SharedState& s) {
  if (!s.adapt) {
    std::printf("criterion 5: FAIL  dnn training: criterion 2 artifacts unavailable\n");
    return false;
  }
  const auto t0 = Clock::now();
  dnn::TrainConfig cfg;
  cfg.seed = kTrainSeed;
  s.initial_model = dnn::init_model(dnn::Architecture{}, kTrainSeed);
  dnn::TrainResult tr = dnn::train(s.initial_model, s.adapt->dataset, cfg);

  // The returned weights are the best-validation snapshot; its held-out
  // accuracies sit in the history row with the minimal validation loss.
  const auto best = std::min_element(
      tr.history.begin(), tr.history.end(),
      [](const dnn::EpochStats& a, const dnn::EpochStats& b) {
        return a.val_loss < b.val_loss;
      });
  const bool have = best != tr.history.end();
  const double acc_h = have ? best->acc_h : 0.0;
  const std::array<double, 4> acc_son =
      have ? best->acc_son : std::array<double, 4>{0, 0, 0, 0};
  const bool acc_ok = have && acc_h >= kAccHMin &&
                      acc_son[0] >= kAccSonMin && acc_son[1] >= kAccSonMin &&
                      acc_son[2] >= kAccSonMin && acc_son[3] >= kAccSonMin;

  // Training-loss monotonicity, counting sub-1% upticks as plateau noise.
  int good = 0;
  const int trans = static_cast<int>(tr.history.size()) - 1;
  for (std::size_t i = 1; i < tr.history.size(); ++i)
    if (tr.history[i].train_loss <=
        tr.history[i - 1].train_loss * (1.0 + kLossPlateauTol))
      ++good;
  const double mono = trans > 0 ? static_cast<double>(good) / trans : 1.0;

  // Finite-difference check over every parameter of the default
  // architecture, at initialization and after ten optimizer steps, on a
  // two-row batch covering an inactive-son label and a four-son label.
  const DecisionRecord* row_none = nullptr;
  const DecisionRecord* row_hxy = nullptr;
  for (const DecisionRecord& r : s.adapt->dataset) {
    if (!row_none && r.href == HClass::None) row_none = &r;
    if (!row_hxy && r.href == HClass::HXY) row_hxy = &r;
  }
  double worst_grad = std::numeric_limits<double>::infinity();
  if (row_none && row_hxy) {
    const std::vector<dnn::TrainSample> batch = {dnn::make_sample(*row_none),
                                                 dnn::make_sample(*row_hxy)};
    worst_grad = grad_check(s.initial_model, batch);
    dnn::Model stepped = s.initial_model;
    dnn::AdamState st;
    dnn::Gradients gr;
    for (int k = 0; k < 10; ++k) {
      dnn::loss_and_gradient(stepped, batch, kUnitWeights, &gr);
      dnn::adam_step(stepped, gr, st, 1e-3);
    }
    worst_grad = std::max(worst_grad, grad_check(stepped, batch));
  }

  const double dt = elapsed_s(t0);
  const bool pass = acc_ok && mono >= kLossMonoMin && worst_grad <= kGradRelTol &&
                    dt < kBudget5Sec;
  std::printf(
      "criterion 5: %s  dnn training (seed %u): held-out acc h %.3f (min %.2f), "
      "sons %.2f/%.2f/%.2f/%.2f (min %.2f), loss mono %.3f (min %.2f), grad "
      "check %.2e (max %.0e), %.1fs\n",
      pass ? "PASS" : "FAIL", kTrainSeed, acc_h, kAccHMin, acc_son[0], acc_son[1],
      acc_son[2], acc_son[3], kAccSonMin, mono, kLossMonoMin, worst_grad,
      kGradRelTol, dt);
  s.trained = std::move(tr);
  return pass;
}

// --------------------------------------------------------------------------
// Criterion 6: continue the criterion 2 run with 10 model-driven iterations;
// the exact error must not increase in at least 8 of them, must end at or
// below the switch point, and the 30-iteration fit must stay exponential.
// --------------------------------------------------------------------------
bool criterion6(SharedState& s) {
  if (!s.adapt || !s.trained) {
    std::printf("criterion 6: FAIL  hybrid continuation: prerequisites unavailable\n");
    return false;
  }
  const auto t0 = Clock::now();
  const Problem prob = lshape_problem();
  AdaptConfig cfg;
  cfg.max_iterations = kHybridIters;
  cfg.accuracy_pct = 0.0;
  const dnn::Model& model = s.trained->model;
  const RefinementPredictor predict = [&model](const Element& e) {
    return dnn::predict_refinement(model, e);
  };
  PredictorLoopResult r = predictor_driven_loop(
      cfg, prob, predict, Mesh(s.adapt->mesh), 21, true,
      [&s](int, const Mesh& m) { note_audit(s, m); });

  // Error chain: switch point, then the state after each model iteration.
  // Records log the pre-refinement state, so record k+1 carries the result
  // of iteration k and one extra solve closes the chain.
  std::vector<double> errs;
  for (const ConvergenceRecord& rec : r.records) errs.push_back(rec.exact_h1_err_pct);
  {
    const FeSolution fin = solve_on(r.mesh, prob);
    errs.push_back(exact_h1_error(fin, prob));
  }
  int non_increasing = 0;
  for (std::size_t i = 0; i + 1 < errs.size(); ++i)
    if (errs[i + 1] <= errs[i]) ++non_increasing;

  std::vector<ConvergenceRecord> full = s.adapt->records;
  full.insert(full.end(), r.records.begin(), r.records.end());
  const auto fit = fit_convergence(full);

  const double dt = elapsed_s(t0);
  const bool pass = static_cast<int>(r.records.size()) == kHybridIters &&
                    non_increasing >= kHybridMinNonIncr && errs.back() <= errs.front() &&
                    fit && fit->r2 >= kHybridR2Min;
  std::printf(
      "criterion 6: %s  hybrid continuation: err non-increasing in %d/%d model "
      "iterations (min %d), final %.3f%% vs switch %.3f%%, 30-iteration fit r2 "
      "%.4f (min %.2f), %.1fs\n",
      pass ? "PASS" : "FAIL", non_increasing, kHybridIters, kHybridMinNonIncr,
      errs.back(), errs.front(), fit ? fit->r2 : 0.0, kHybridR2Min, dt);
  return pass;
}

// --------------------------------------------------------------------------
// Criterion 7: rerunning the adaptive loop and the training with the same
// seeds reproduces the dataset, convergence, model, and history byte for
// byte.
// --------------------------------------------------------------------------
bool criterion7(SharedState& s) {
  if (!s.adapt || !s.trained) {
    std::printf("criterion 7: FAIL  determinism: prerequisites unavailable\n");
    return false;
  }
  const auto t0 = Clock::now();
  AdaptConfig cfg;
  cfg.max_iterations = 20;
  cfg.accuracy_pct = 0.0;
  cfg.threshold = 0.33;
  cfg.initial_order = 2;
  AdaptResult again = self_adaptive_loop(cfg, lshape_problem(),
                                         [&s](int, const Mesh& m) { note_audit(s, m); });

  std::ostringstream ds_a, ds_b, cv_a, cv_b;
  write_dataset(s.adapt->dataset, ds_a);
  write_dataset(again.dataset, ds_b);
  write_convergence_csv(s.adapt->records, cv_a);
  write_convergence_csv(again.records, cv_b);

  dnn::TrainConfig tc;
  tc.seed = kTrainSeed;
  const dnn::Model init2 = dnn::init_model(dnn::Architecture{}, kTrainSeed);
  const dnn::TrainResult tr2 = dnn::train(init2, again.dataset, tc);

  std::ostringstream mo_a, mo_b, hi_a, hi_b;
  dnn::save_model(s.trained->model, mo_a);
  dnn::save_model(tr2.model, mo_b);
  dnn::write_history_csv(s.trained->history, hi_a);
  dnn::write_history_csv(tr2.history, hi_b);

  const bool ds_eq = ds_a.str() == ds_b.str();
  const bool cv_eq = cv_a.str() == cv_b.str();
  const bool mo_eq = mo_a.str() == mo_b.str();
  const bool hi_eq = hi_a.str() == hi_b.str();
  const double dt = elapsed_s(t0);
  const bool pass = ds_eq && cv_eq && mo_eq && hi_eq;
  std::printf(
      "criterion 7: %s  determinism: dataset %s, convergence %s, model %s, "
      "history %s, %.1fs\n",
      pass ? "PASS" : "FAIL", ds_eq ? "identical" : "DIFFERS",
      cv_eq ? "identical" : "DIFFERS", mo_eq ? "identical" : "DIFFERS",
      hi_eq ? "identical" : "DIFFERS", dt);
  return pass;
}

// --------------------------------------------------------------------------
// Criterion 8: every mesh audited anywhere above is clean, and the coarse
// energies of criterion 2 (including the final solve) never decrease.
// --------------------------------------------------------------------------
bool criterion8(const SharedState& s) {
  const bool audits_ok = s.audits > 0 && s.violations == 0;
  bool energy_ok = s.coarse_energies.size() == 21;
  int energy_steps = 0;
  for (std::size_t i = 0; i + 1 < s.coarse_energies.size(); ++i) {
    const double lo =
        s.coarse_energies[i] -
        kEnergySlack * std::max(1.0, std::abs(s.coarse_energies[i]));
    if (s.coarse_energies[i + 1] >= lo) ++energy_steps;
    else energy_ok = false;
  }
  const bool pass = audits_ok && energy_ok;
  std::printf(
      "criterion 8: %s  structural invariants: %ld mesh audits with %ld "
      "violations; energy non-decreasing in %d/%zu coarse-solve steps\n",
      pass ? "PASS" : "FAIL", s.audits, s.violations, energy_steps,
      s.coarse_energies.empty() ? 0 : s.coarse_energies.size() - 1);
  return pass;
}

}  // namespace

int main() {
  SharedState s;
  auto guard = [](int n, auto&& fn) {
    try {
      return fn();
    } catch (const std::exception& ex) {
      std::printf("criterion %d: FAIL  unexpected exception: %s\n", n, ex.what());
      return false;
    }
  };
  bool all = true;
  all &= guard(1, [&] { return criterion1(s); });
  all &= guard(2, [&] { return criterion2(s); });
  all &= guard(3, [&] { return criterion3(s); });
  all &= guard(4, [&] { return criterion4(s); });
  all &= guard(5, [&] { return criterion5(s); });
  all &= guard(6, [&] { return criterion6(s); });
  all &= guard(7, [&] { return criterion7(s); });
  all &= guard(8, [&] { return criterion8(s); });
  std::printf("acceptance: %s\n", all ? "all 8 criteria passed" : "FAILURES present");
  return all ? 0 : 1;
}
