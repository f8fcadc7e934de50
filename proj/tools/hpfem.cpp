// Command-line front end for the hp-adaptive pipeline.
//
// Subcommands:
//   adapt      two-grid self-adaptive run on the L-shaped benchmark
//   train      fit the refinement oracle network on a decision dataset
//   dnn-adapt  solver-free refinement loop driven by a trained oracle
//   report     plot-ready convergence tables with least-squares fits
//
// Exit codes: 0 success, 1 runtime failure, 2 bad flags.

#include <CLI11.hpp>

#include <hpfem/dnn.hpp>
#include <hpfem/driver.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace fs = std::filesystem;

namespace {

std::string snapshot_path(const std::string& dir, int index) {
  char name[32];
  std::snprintf(name, sizeof(name), "mesh_%03d.txt", index);
  return (fs::path(dir) / name).string();
}

// Finds the highest-numbered mesh_NNN.txt in dir; the scan is order
// independent so resume behaves the same on any filesystem.
std::pair<fs::path, int> highest_snapshot(const std::string& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
  fs::path best_path;
  int best = -1;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() <= 9 || name.rfind("mesh_", 0) != 0 ||
        name.substr(name.size() - 4) != ".txt")
      continue;
    const std::string digits = name.substr(5, name.size() - 9);
    if (digits.find_first_not_of("0123456789") != std::string::npos) continue;
    const int index = std::stoi(digits);
    if (index > best) {
      best = index;
      best_path = entry.path();
    }
  }
  if (best < 0) throw std::runtime_error("no mesh snapshots found in " + dir);
  return {best_path, best};
}

hpfem::SnapshotCallback make_snapshot_writer(const std::string& dir, int* count) {
  if (dir.empty()) return {};
  fs::create_directories(dir);
  return [dir, count](int iter, const hpfem::Mesh& mesh) {
    hpfem::write_mesh_snapshot(mesh, snapshot_path(dir, iter));
    ++*count;
  };
}

// ---------------------------------------------------------------------------
// adapt
// ---------------------------------------------------------------------------

struct AdaptFlags {
  int iters = 20;
  double accuracy = 1.0;
  double threshold = 0.33;
  int p0 = 2;
  std::string dataset;
  std::string convergence;
  std::string mesh_out;
  unsigned seed = 0;
};

int run_adapt(const AdaptFlags& f) {
  hpfem::AdaptConfig cfg;
  cfg.max_iterations = f.iters;
  cfg.accuracy_pct = f.accuracy;
  cfg.threshold = f.threshold;
  cfg.initial_order = f.p0;
  cfg.dataset_path = f.dataset;

  int snapshots = 0;
  const hpfem::SnapshotCallback on_refined = make_snapshot_writer(f.mesh_out, &snapshots);
  if (!f.mesh_out.empty()) {
    hpfem::write_mesh_snapshot(hpfem::create_initial_mesh(cfg.initial_order),
                               snapshot_path(f.mesh_out, 0));
    ++snapshots;
  }

  const hpfem::AdaptResult result =
      hpfem::self_adaptive_loop(cfg, hpfem::lshape_problem(), on_refined);
  hpfem::write_dataset(result.dataset, f.dataset);
  hpfem::write_convergence_csv(result.records, f.convergence);

  std::cout << "adapt: " << result.records.size() << " iteration(s), stop: "
            << result.stop_reason << "\n";
  if (!result.records.empty()) {
    const hpfem::ConvergenceRecord& last = result.records.back();
    char line[160];
    std::snprintf(line, sizeof(line),
                  "final: ndof=%d max_rel_err_pct=%.6g exact_h1_err_pct=%.6g\n",
                  last.ndof_coarse, last.max_rel_err_pct, last.exact_h1_err_pct);
    std::cout << line;
  }
  std::cout << "wrote " << f.dataset << " (" << result.dataset.size() << " row(s)) and "
            << f.convergence << "\n";
  if (!f.mesh_out.empty())
    std::cout << "wrote " << snapshots << " mesh snapshot(s) to " << f.mesh_out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainFlags {
  std::string dataset;
  std::string model_out;
  std::string history;
  int epochs = 200;
  double lr = 1e-3;
  double split = 0.8;
  unsigned seed = 0;
};

int run_train(const TrainFlags& f) {
  const std::vector<hpfem::DecisionRecord> rows = hpfem::read_dataset(f.dataset);
  if (rows.empty()) throw std::runtime_error("dataset " + f.dataset + " has no rows");

  hpfem::dnn::TrainConfig cfg;
  cfg.epochs = f.epochs;
  cfg.learning_rate = f.lr;
  cfg.val_fraction = 1.0 - f.split;
  cfg.seed = f.seed;

  const int n = static_cast<int>(rows.size());
  const int n_val =
      std::clamp(static_cast<int>(std::lround(cfg.val_fraction * n)), 0, n - 1);
  if (n_val == 0)
    std::cerr << "warning: empty validation set; scheduling and metrics use the "
                 "training rows\n";
  else if (n_val < 2)
    std::cerr << "warning: validation set of " << n_val
              << " row(s); validation metrics will be coarse\n";

  const hpfem::dnn::Model initial =
      hpfem::dnn::init_model(hpfem::dnn::Architecture{}, f.seed);
  const hpfem::dnn::TrainResult result = hpfem::dnn::train(initial, rows, cfg);
  hpfem::dnn::save_model(result.model, f.model_out);
  const std::string history_path =
      f.history.empty() ? f.model_out + ".history.csv" : f.history;
  hpfem::dnn::write_history_csv(result.history, history_path);

  std::cout << "train: " << n << " row(s), " << n - n_val << " train / " << n_val
            << " validation, " << result.history.size() << " epoch(s) run\n";
  if (result.history.empty()) {
    std::cout << "no epochs requested; wrote initial weights\n";
  } else {
    // The returned weights are the best-validation snapshot: report the
    // accuracies from that epoch, not from the last one.
    const auto best = std::min_element(
        result.history.begin(), result.history.end(),
        [](const auto& a, const auto& b) { return a.val_loss < b.val_loss; });
    char line[200];
    std::snprintf(line, sizeof(line),
                  "final %s accuracy (epoch %d): h=%.4f p1=%.4f p2=%.4f p3=%.4f "
                  "p4=%.4f\n",
                  n_val > 0 ? "validation" : "training", best->epoch, best->acc_h,
                  best->acc_son[0], best->acc_son[1], best->acc_son[2],
                  best->acc_son[3]);
    std::cout << line;
  }
  std::cout << "wrote " << f.model_out << " and " << history_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// dnn-adapt
// ---------------------------------------------------------------------------

struct DnnAdaptFlags {
  std::string model;
  int iters = 10;
  bool solve_each = false;
  std::string convergence;
  std::string mesh_out;
  std::string resume;
  int p0 = 2;
};

int run_dnn_adapt(const DnnAdaptFlags& f) {
  const hpfem::dnn::Model model = hpfem::dnn::load_model(f.model);

  hpfem::Mesh mesh;
  int start_iter = 1;
  if (f.resume.empty()) {
    mesh = hpfem::create_initial_mesh(f.p0);
  } else {
    const auto [path, index] = highest_snapshot(f.resume);
    mesh = hpfem::read_mesh_snapshot(path.string());
    start_iter = index + 1;
    std::cout << "resumed from " << path.string() << " ("
              << mesh.active_ids().size() << " active element(s))\n";
  }

  int snapshots = 0;
  const hpfem::SnapshotCallback on_refined = make_snapshot_writer(f.mesh_out, &snapshots);
  if (f.resume.empty() && !f.mesh_out.empty()) {
    hpfem::write_mesh_snapshot(mesh, snapshot_path(f.mesh_out, 0));
    ++snapshots;
  }

  hpfem::AdaptConfig cfg;
  cfg.max_iterations = f.iters;
  cfg.initial_order = f.p0;
  const hpfem::Problem problem = hpfem::lshape_problem();
  const auto predictor = [&model](const hpfem::Element& e) {
    return hpfem::dnn::predict_refinement(model, e);
  };
  const hpfem::PredictorLoopResult result = hpfem::predictor_driven_loop(
      cfg, problem, predictor, std::move(mesh), start_iter, f.solve_each, on_refined);
  if (!result.mesh.audit().ok())
    throw std::runtime_error("refined mesh failed its audit");
  hpfem::write_convergence_csv(result.records, f.convergence);

  const int final_ndof = hpfem::build_dof_map(result.mesh, problem).n_dofs;
  std::cout << "dnn-adapt: " << result.records.size()
            << " iteration(s) starting at iteration " << start_iter << "\n";
  std::cout << "final: " << result.mesh.active_ids().size()
            << " active element(s), ndof=" << final_ndof << "\n";
  std::cout << "wrote " << f.convergence << "\n";
  if (!f.mesh_out.empty())
    std::cout << "wrote " << snapshots << " mesh snapshot(s) to " << f.mesh_out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportFlags {
  std::vector<std::string> files;
  std::string out;
};

int run_report(const ReportFlags& f) {
  std::ostringstream text;
  text << "# convergence report: ndof^(1/3) vs log10(exact_h1_err_pct)\n";
  for (const std::string& path : f.files) {
    const std::vector<hpfem::ConvergenceRecord> records =
        hpfem::read_convergence_csv(path);
    std::vector<double> x, y;
    for (const hpfem::ConvergenceRecord& r : records) {
      if (!(r.exact_h1_err_pct > 0.0)) continue;
      x.push_back(std::cbrt(static_cast<double>(r.ndof_coarse)));
      y.push_back(std::log10(r.exact_h1_err_pct));
    }
    text << "\n# series " << path << " (" << x.size() << " point(s))\n";
    text << "ndof_cbrt,log10_err\n";
    for (std::size_t i = 0; i < x.size(); ++i)
      text << hpfem::detail::g17(x[i]) << ',' << hpfem::detail::g17(y[i]) << "\n";
    if (const std::optional<hpfem::LinearFit> fit = hpfem::fit_line(x, y)) {
      text << "# fit slope=" << hpfem::detail::g17(fit->slope)
           << " intercept=" << hpfem::detail::g17(fit->intercept)
           << " r2=" << hpfem::detail::g17(fit->r2) << " n=" << fit->n << "\n";
    } else {
      text << "# fit undefined (needs at least 3 points with positive error)\n";
    }
  }
  if (f.out.empty()) {
    std::cout << text.str();
  } else {
    std::ofstream out(f.out);
    if (!out) throw std::runtime_error("cannot open " + f.out + " for writing");
    out << text.str();
    std::cout << "wrote " << f.out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hp-adaptive finite elements: adaptive runs, oracle training, reports"};
  app.require_subcommand(1);

  AdaptFlags af;
  CLI::App* adapt = app.add_subcommand(
      "adapt", "Run the two-grid self-adaptive loop on the L-shaped benchmark");
  adapt->add_option("--iters", af.iters, "maximum number of adaptive iterations")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  adapt
      ->add_option("--accuracy", af.accuracy,
                   "stop once the max relative error (%) drops below this")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  adapt
      ->add_option("--threshold", af.threshold,
                   "select elements within this fraction of the worst error")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  adapt->add_option("--p0", af.p0, "polynomial order of the initial mesh")
      ->capture_default_str()
      ->check(CLI::Range(1, hpfem::kMaxOrder - 1));
  adapt->add_option("--dataset", af.dataset, "output CSV of refinement decisions")
      ->required();
  adapt
      ->add_option("--convergence", af.convergence,
                   "output CSV of per-iteration convergence data")
      ->required();
  adapt->add_option("--mesh-out", af.mesh_out,
                    "directory for per-iteration mesh snapshots");
  adapt
      ->add_option("--seed", af.seed,
                   "run seed, recorded for provenance; the loop is deterministic")
      ->capture_default_str();

  TrainFlags tf;
  CLI::App* train = app.add_subcommand(
      "train", "Train the refinement oracle network on a decision dataset");
  train->add_option("--dataset", tf.dataset, "input decision CSV")->required();
  train->add_option("--model-out", tf.model_out, "output model file")->required();
  train->add_option("--epochs", tf.epochs, "maximum training epochs")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  train->add_option("--lr", tf.lr, "initial Adam learning rate")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train
      ->add_option("--split", tf.split,
                   "fraction of rows used for training; the rest validate")
      ->capture_default_str()
      ->check(
          [](const std::string& s) -> std::string {
            char* end = nullptr;
            const double v = std::strtod(s.c_str(), &end);
            if (end == s.c_str() || *end != '\0' || !(v > 0.0 && v < 1.0))
              return "train fraction must lie strictly between 0 and 1";
            return {};
          },
          "FLOAT in (0,1)", "split");
  train->add_option("--seed", tf.seed, "seed for the split, shuffles, and init")
      ->capture_default_str();
  train->add_option("--history", tf.history,
                    "training history CSV (default: <model-out>.history.csv)");

  DnnAdaptFlags df;
  CLI::App* dnn_adapt = app.add_subcommand(
      "dnn-adapt", "Refine with a trained oracle, no reference solves needed");
  dnn_adapt->add_option("--model", df.model, "trained model file")->required();
  dnn_adapt->add_option("--iters", df.iters, "number of oracle-driven iterations")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  dnn_adapt->add_flag("--solve-each-iter", df.solve_each,
                      "solve the coarse problem each iteration to log energy and "
                      "exact error");
  dnn_adapt
      ->add_option("--convergence", df.convergence,
                   "output CSV of per-iteration convergence data")
      ->required();
  dnn_adapt->add_option("--mesh-out", df.mesh_out,
                        "directory for per-iteration mesh snapshots");
  dnn_adapt->add_option(
      "--resume", df.resume,
      "resume from the highest mesh_NNN.txt in this directory; iteration "
      "numbering continues at NNN+1");
  dnn_adapt
      ->add_option("--p0", df.p0,
                   "polynomial order of the initial mesh (ignored with --resume)")
      ->capture_default_str()
      ->check(CLI::Range(1, hpfem::kMaxOrder - 1));

  ReportFlags rf;
  CLI::App* report = app.add_subcommand(
      "report", "Emit plot-ready convergence tables with least-squares fits");
  report->add_option("files", rf.files, "convergence CSV files")->required();
  report->add_option("--out", rf.out, "write the report here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << "\n";
    const auto parsed = app.get_subcommands();
    std::cerr << (parsed.empty() ? app.help() : parsed.front()->help());
    return 2;
  }

  try {
    if (adapt->parsed()) return run_adapt(af);
    if (train->parsed()) return run_train(tf);
    if (dnn_adapt->parsed()) return run_dnn_adapt(df);
    if (report->parsed()) return run_report(rf);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
