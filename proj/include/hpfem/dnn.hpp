#pragma once

// Branched multilayer perceptron that learns refinement decisions: a shared
// trunk feeding five branches (one 4-class h-class head, four son heads with
// two 10-class order groups each). Forward, backprop, Adam, and the training
// loop are self-contained; Eigen supplies the matrix arithmetic.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hpfem/dataset.hpp"

namespace hpfem::dnn {

inline constexpr int kBranches = 5;
inline constexpr int kHClasses = 4;
inline constexpr int kOrderClasses = 10;  // son orders live in {0..9}

struct Architecture {
  int input = 8;
  std::vector<int> trunk = {64, 64};
  std::vector<int> branch = {64, 32, 16};  // hidden widths before each head
  double dropout_rate = 0.2;

  int head_width(int b) const { return b == 0 ? kHClasses : 2 * kOrderClasses; }
  int layers_per_branch() const { return static_cast<int>(branch.size()) + 1; }
  int layer_count() const {
    return static_cast<int>(trunk.size()) + kBranches * layers_per_branch();
  }
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

inline void validate_architecture(const Architecture& a) {
  if (a.input != 8) throw std::invalid_argument("architecture: input width must be 8");
  if (a.trunk.empty() || a.branch.empty())
    throw std::invalid_argument("architecture: empty layer list");
  for (int w : a.trunk)
    if (w < 1) throw std::invalid_argument("architecture: trunk width < 1");
  for (int w : a.branch)
    if (w < 1) throw std::invalid_argument("architecture: branch width < 1");
  if (!(a.dropout_rate >= 0.0 && a.dropout_rate < 1.0))
    throw std::invalid_argument("architecture: dropout rate outside [0,1)");
}

struct Layer {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
};

// Layer order: trunk layers, then for each branch its hidden layers followed
// by the head.
struct Model {
  Architecture arch;
  unsigned seed = 0;
  std::vector<Layer> layers;

  int trunk_count() const { return static_cast<int>(arch.trunk.size()); }
  int branch_layer(int b, int j) const {
    return trunk_count() + b * arch.layers_per_branch() + j;
  }
  int head_layer(int b) const {
    return branch_layer(b, static_cast<int>(arch.branch.size()));
  }
};

namespace detail {

// 53-bit uniform in [0,1) built directly from the generator words, so the
// stream does not depend on standard-library distribution internals.
inline double urand(std::mt19937& g) {
  const double hi = static_cast<double>(g() >> 5);   // 27 bits
  const double lo = static_cast<double>(g() >> 6);   // 26 bits
  return (hi * 67108864.0 + lo) / 9007199254740992.0;
}

inline int rand_below(std::mt19937& g, int n) {
  return std::min(n - 1, static_cast<int>(urand(g) * n));
}

template <class T>
inline void shuffle_indices(std::vector<T>& v, std::mt19937& g) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i)
    std::swap(v[i], v[rand_below(g, i + 1)]);
}

inline std::vector<std::pair<int, int>> layer_shapes(const Architecture& a) {
  std::vector<std::pair<int, int>> shapes;
  int in = a.input;
  for (int w : a.trunk) {
    shapes.emplace_back(w, in);
    in = w;
  }
  const int trunk_out = in;
  for (int b = 0; b < kBranches; ++b) {
    in = trunk_out;
    for (int w : a.branch) {
      shapes.emplace_back(w, in);
      in = w;
    }
    shapes.emplace_back(a.head_width(b), in);
  }
  return shapes;
}

}  // namespace detail

// Fan-in scaled uniform initialization, deterministic per seed.
inline Model init_model(const Architecture& arch, unsigned seed) {
  validate_architecture(arch);
  Model m;
  m.arch = arch;
  m.seed = seed;
  std::mt19937 rng(seed);
  for (const auto& [rows, cols] : detail::layer_shapes(arch)) {
    Layer l;
    l.W.resize(rows, cols);
    const double limit = std::sqrt(6.0 / cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        l.W(r, c) = (2.0 * detail::urand(rng) - 1.0) * limit;
    l.b = Eigen::VectorXd::Zero(rows);
    m.layers.push_back(std::move(l));
  }
  return m;
}

// All-zero weights: every softmax group is uniform for every input.
inline Model zero_model(const Architecture& arch) {
  validate_architecture(arch);
  Model m;
  m.arch = arch;
  m.seed = 0;
  for (const auto& [rows, cols] : detail::layer_shapes(arch))
    m.layers.push_back({Eigen::MatrixXd::Zero(rows, cols), Eigen::VectorXd::Zero(rows)});
  return m;
}

// ---------------------------------------------------------------------------
// Samples and labels
// ---------------------------------------------------------------------------

inline int active_sons(HClass h) {
  return h == HClass::None ? 1 : (h == HClass::HXY ? 4 : 2);
}

struct TrainSample {
  std::array<double, 8> x{};
  int hclass = 0;
  std::array<std::array<int, 2>, 4> sons{};  // (0,0) marks an inactive son
};

inline TrainSample make_sample(const DecisionRecord& r) {
  hpfem::detail::validate_record(r, "(sample)");
  TrainSample s;
  s.x = {r.x1, r.y1, r.x2,          r.y2,
         std::log2(r.dx), std::log2(r.dy), r.px / 9.0, r.py / 9.0};
  s.hclass = static_cast<int>(r.href);
  s.sons = r.sons;
  return s;
}

inline std::vector<TrainSample> to_samples(const std::vector<DecisionRecord>& rows) {
  std::vector<TrainSample> out;
  out.reserve(rows.size());
  for (const DecisionRecord& r : rows) out.push_back(make_sample(r));
  return out;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

struct BatchOutput {
  Eigen::MatrixXd h;  // kHClasses x n
  // son[k][0]: p_x probabilities, son[k][1]: p_y; each kOrderClasses x n.
  std::array<std::array<Eigen::MatrixXd, 2>, 4> son;
};

namespace detail {

struct ForwardCache {
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> act;   // post-activation per layer; logits for heads
  std::vector<Eigen::MatrixXd> mask;  // dropout masks for hidden layers, else empty
};

inline void softmax_block(Eigen::MatrixXd& logits, int row0, int rows) {
  for (int c = 0; c < logits.cols(); ++c) {
    auto blk = logits.block(row0, c, rows, 1);
    const double mx = blk.maxCoeff();
    blk = (blk.array() - mx).exp();
    blk /= blk.sum();
  }
}

// Evaluates the network on a column-per-sample batch. A non-null rng enables
// inverted dropout after every hidden layer; the cache, when requested, keeps
// what backprop needs.
inline BatchOutput forward_batch(const Model& m, const Eigen::MatrixXd& X,
                                 std::mt19937* rng, ForwardCache* cache) {
  if (X.rows() != m.arch.input)
    throw std::invalid_argument("forward: expected 8 features per sample");
  if (!X.allFinite()) throw std::invalid_argument("forward: non-finite input");
  const double rate = m.arch.dropout_rate;
  const bool drop = rng != nullptr && rate > 0.0;
  const double inv_keep = drop ? 1.0 / (1.0 - rate) : 1.0;

  if (cache) {
    cache->input = X;
    cache->act.assign(m.layers.size(), {});
    cache->mask.assign(m.layers.size(), {});
  }
  auto apply_hidden = [&](int l, const Eigen::MatrixXd& in) {
    Eigen::MatrixXd a = ((m.layers[l].W * in).colwise() + m.layers[l].b).cwiseMax(0.0);
    if (drop) {
      Eigen::MatrixXd mask(a.rows(), a.cols());
      for (int c = 0; c < a.cols(); ++c)
        for (int r = 0; r < a.rows(); ++r)
          mask(r, c) = urand(*rng) < rate ? 0.0 : inv_keep;
      a = a.cwiseProduct(mask);
      if (cache) cache->mask[l] = std::move(mask);
    }
    if (cache) cache->act[l] = a;
    return a;
  };

  Eigen::MatrixXd a = X;
  for (int l = 0; l < m.trunk_count(); ++l) a = apply_hidden(l, a);
  const Eigen::MatrixXd trunk_out = a;

  BatchOutput out;
  for (int b = 0; b < kBranches; ++b) {
    Eigen::MatrixXd ab = trunk_out;
    for (int j = 0; j < static_cast<int>(m.arch.branch.size()); ++j)
      ab = apply_hidden(m.branch_layer(b, j), ab);
    const int hl = m.head_layer(b);
    Eigen::MatrixXd logits = (m.layers[hl].W * ab).colwise() + m.layers[hl].b;
    if (cache) cache->act[hl] = logits;
    if (b == 0) {
      softmax_block(logits, 0, kHClasses);
      out.h = std::move(logits);
    } else {
      softmax_block(logits, 0, kOrderClasses);
      softmax_block(logits, kOrderClasses, kOrderClasses);
      out.son[b - 1][0] = logits.topRows(kOrderClasses);
      out.son[b - 1][1] = logits.bottomRows(kOrderClasses);
    }
  }
  return out;
}

}  // namespace detail

struct HeadProbs {
  std::array<double, kHClasses> h{};
  std::array<std::array<std::array<double, kOrderClasses>, 2>, 4> son{};
};

// Single-sample evaluation; a non-null rng turns dropout on (training mode).
inline HeadProbs forward(const Model& m, const std::array<double, 8>& x,
                         std::mt19937* training_rng = nullptr) {
  Eigen::MatrixXd X(8, 1);
  for (int i = 0; i < 8; ++i) X(i, 0) = x[i];
  const BatchOutput out = detail::forward_batch(m, X, training_rng, nullptr);
  HeadProbs p;
  for (int i = 0; i < kHClasses; ++i) p.h[i] = out.h(i, 0);
  for (int k = 0; k < 4; ++k)
    for (int g = 0; g < 2; ++g)
      for (int i = 0; i < kOrderClasses; ++i) p.son[k][g][i] = out.son[k][g](i, 0);
  return p;
}

// ---------------------------------------------------------------------------
// Loss and gradients
// ---------------------------------------------------------------------------

struct Gradients {
  std::vector<Layer> g;
};

namespace detail {

inline Eigen::MatrixXd batch_features(const std::vector<TrainSample>& batch) {
  Eigen::MatrixXd X(8, static_cast<int>(batch.size()));
  for (std::size_t s = 0; s < batch.size(); ++s)
    for (int i = 0; i < 8; ++i) X(i, static_cast<int>(s)) = batch[s].x[i];
  return X;
}

inline void check_labels(const std::vector<TrainSample>& batch) {
  for (const TrainSample& s : batch) {
    if (s.hclass < 0 || s.hclass >= kHClasses)
      throw std::invalid_argument("loss: h-class label out of range");
    for (int k = 0; k < active_sons(static_cast<HClass>(s.hclass)); ++k)
      for (int g = 0; g < 2; ++g)
        if (s.sons[k][g] < 1 || s.sons[k][g] >= kOrderClasses)
          throw std::invalid_argument("loss: son order label out of range");
  }
}

}  // namespace detail

// Mean over the batch of the summed per-group cross-entropies. Son groups
// contribute only when the label marks the son active; the h-class term is
// scaled by its class weight. Pass a null rng to evaluate without dropout
// (loss becomes a pure function of the parameters) and a null grads pointer
// to skip backpropagation.
inline double loss_and_gradient(const Model& m, const std::vector<TrainSample>& batch,
                                const std::array<double, kHClasses>& class_weights,
                                Gradients* grads, std::mt19937* dropout_rng = nullptr) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  detail::check_labels(batch);
  const int n = static_cast<int>(batch.size());
  const double inv_n = 1.0 / n;

  detail::ForwardCache cache;
  const BatchOutput out = detail::forward_batch(m, detail::batch_features(batch),
                                                dropout_rng, grads ? &cache : nullptr);

  auto safe_log = [](double p) { return std::log(std::max(p, 1e-300)); };
  double loss = 0.0;
  for (int s = 0; s < n; ++s) {
    const TrainSample& smp = batch[s];
    loss -= class_weights[smp.hclass] * safe_log(out.h(smp.hclass, s));
    for (int k = 0; k < active_sons(static_cast<HClass>(smp.hclass)); ++k) {
      loss -= safe_log(out.son[k][0](smp.sons[k][0], s));
      loss -= safe_log(out.son[k][1](smp.sons[k][1], s));
    }
  }
  loss *= inv_n;
  if (!grads) return loss;

  // Softmax cross-entropy head gradients: (p - onehot), weighted and masked.
  std::vector<Eigen::MatrixXd> head_dz(kBranches);
  head_dz[0] = out.h * inv_n;
  for (int s = 0; s < n; ++s) {
    const double w = class_weights[batch[s].hclass];
    head_dz[0].col(s) *= w;
    head_dz[0](batch[s].hclass, s) -= w * inv_n;
  }
  for (int b = 1; b < kBranches; ++b) {
    head_dz[b] = Eigen::MatrixXd::Zero(2 * kOrderClasses, n);
    const int k = b - 1;
    for (int s = 0; s < n; ++s) {
      if (k >= active_sons(static_cast<HClass>(batch[s].hclass))) continue;
      head_dz[b].block(0, s, kOrderClasses, 1) = out.son[k][0].col(s) * inv_n;
      head_dz[b](batch[s].sons[k][0], s) -= inv_n;
      head_dz[b].block(kOrderClasses, s, kOrderClasses, 1) = out.son[k][1].col(s) * inv_n;
      head_dz[b](kOrderClasses + batch[s].sons[k][1], s) -= inv_n;
    }
  }

  grads->g.assign(m.layers.size(), {});
  const int nb = static_cast<int>(m.arch.branch.size());
  const Eigen::MatrixXd& trunk_out =
      m.trunk_count() > 0 ? cache.act[m.trunk_count() - 1] : cache.input;

  // dZ -> (dW, db, dA_in) for one layer; returns the input-side gradient.
  auto backprop_layer = [&](int l, const Eigen::MatrixXd& dz,
                            const Eigen::MatrixXd& a_in) {
    grads->g[l].W = dz * a_in.transpose();
    grads->g[l].b = dz.rowwise().sum();
    return Eigen::MatrixXd(m.layers[l].W.transpose() * dz);
  };
  // ReLU (and dropout-mask) chain through a hidden layer's activation.
  auto through_hidden = [&](int l, Eigen::MatrixXd da) {
    Eigen::MatrixXd dz =
        da.cwiseProduct((cache.act[l].array() > 0.0).cast<double>().matrix());
    if (cache.mask[l].size() > 0) dz = dz.cwiseProduct(cache.mask[l]);
    return dz;
  };

  Eigen::MatrixXd d_trunk_out = Eigen::MatrixXd::Zero(trunk_out.rows(), n);
  for (int b = 0; b < kBranches; ++b) {
    Eigen::MatrixXd da = backprop_layer(
        m.head_layer(b), head_dz[b],
        nb > 0 ? cache.act[m.branch_layer(b, nb - 1)] : trunk_out);
    for (int j = nb - 1; j >= 0; --j) {
      const int l = m.branch_layer(b, j);
      const Eigen::MatrixXd dz = through_hidden(l, std::move(da));
      da = backprop_layer(l, dz, j > 0 ? cache.act[m.branch_layer(b, j - 1)] : trunk_out);
    }
    d_trunk_out += da;
  }
  Eigen::MatrixXd da = std::move(d_trunk_out);
  for (int l = m.trunk_count() - 1; l >= 0; --l) {
    const Eigen::MatrixXd dz = through_hidden(l, std::move(da));
    da = backprop_layer(l, dz, l > 0 ? cache.act[l - 1] : cache.input);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<Layer> m, v;
  long t = 0;
};

inline void adam_step(Model& model, const Gradients& grads, AdamState& st, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (grads.g.size() != model.layers.size())
    throw std::invalid_argument("adam_step: gradient shape mismatch");
  if (st.m.empty()) {
    st.m.resize(model.layers.size());
    st.v.resize(model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      st.m[l] = {Eigen::MatrixXd::Zero(model.layers[l].W.rows(), model.layers[l].W.cols()),
                 Eigen::VectorXd::Zero(model.layers[l].b.size())};
      st.v[l] = st.m[l];
    }
  }
  ++st.t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto update = [&](auto& theta, auto& mm, auto& vv, const auto& g) {
      mm = beta1 * mm + (1.0 - beta1) * g;
      vv.array() = beta2 * vv.array() + (1.0 - beta2) * g.array().square();
      theta.array() -=
          lr * (mm.array() / bc1) / ((vv.array() / bc2).sqrt() + eps);
    };
    update(model.layers[l].W, st.m[l].W, st.v[l].W, grads.g[l].W);
    update(model.layers[l].b, st.m[l].b, st.v[l].b, grads.g[l].b);
  }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct HeadAccuracy {
  double h = 1.0;
  std::array<double, 4> son{1.0, 1.0, 1.0, 1.0};  // vacuously 1 with no active rows
};

namespace detail {

inline int argmax_block(const Eigen::MatrixXd& mat, int row0, int rows, int col) {
  int best = 0;
  double bv = mat(row0, col);
  for (int r = 1; r < rows; ++r)
    if (mat(row0 + r, col) > bv) {
      bv = mat(row0 + r, col);
      best = r;
    }
  return best;
}

}  // namespace detail

// Argmax accuracy per head. A son head counts a row only when that son is
// active in the label, and scores it only if both order groups are right.
inline HeadAccuracy evaluate_accuracy(const Model& m,
                                      const std::vector<TrainSample>& set) {
  if (set.empty()) return {};
  const BatchOutput out =
      detail::forward_batch(m, detail::batch_features(set), nullptr, nullptr);
  HeadAccuracy acc;
  int h_ok = 0;
  std::array<int, 4> son_ok{}, son_n{};
  for (int s = 0; s < static_cast<int>(set.size()); ++s) {
    if (detail::argmax_block(out.h, 0, kHClasses, s) == set[s].hclass) ++h_ok;
    for (int k = 0; k < active_sons(static_cast<HClass>(set[s].hclass)); ++k) {
      ++son_n[k];
      const bool px_ok =
          detail::argmax_block(out.son[k][0], 0, kOrderClasses, s) == set[s].sons[k][0];
      const bool py_ok =
          detail::argmax_block(out.son[k][1], 0, kOrderClasses, s) == set[s].sons[k][1];
      if (px_ok && py_ok) ++son_ok[k];
    }
  }
  acc.h = static_cast<double>(h_ok) / static_cast<double>(set.size());
  for (int k = 0; k < 4; ++k)
    if (son_n[k] > 0) acc.son[k] = static_cast<double>(son_ok[k]) / son_n[k];
  return acc;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 1e-3;
  int batch_size = 32;
  double val_fraction = 0.2;
  double lr_factor = 0.5;
  int lr_patience = 10;
  int stop_patience = 25;
  bool class_weights = true;
  bool dropout = true;
  unsigned seed = 0;
};

inline void validate_train_config(const TrainConfig& c) {
  if (c.epochs < 0) throw std::invalid_argument("train config: negative epochs");
  if (!(c.learning_rate > 0.0)) throw std::invalid_argument("train config: lr <= 0");
  if (c.batch_size < 1) throw std::invalid_argument("train config: batch size < 1");
  if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0))
    throw std::invalid_argument("train config: validation fraction outside (0,1)");
  if (c.lr_patience < 1 || c.stop_patience < 1)
    throw std::invalid_argument("train config: patience < 1");
  if (!(c.lr_factor > 0.0 && c.lr_factor < 1.0))
    throw std::invalid_argument("train config: lr factor outside (0,1)");
}

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double acc_h = 0;
  std::array<double, 4> acc_son{};
};

struct TrainResult {
  Model model;
  std::vector<EpochStats> history;
};

// Deterministic minibatch Adam training: seeded split, shuffles, and dropout
// masks; plateau-halved learning rate; early stopping; the weights with the
// best validation loss are returned.
inline TrainResult train(const Model& initial, const std::vector<DecisionRecord>& rows,
                         const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (rows.empty()) throw std::invalid_argument("train: empty dataset");
  const std::vector<TrainSample> all = to_samples(rows);
  const int n = static_cast<int>(all.size());

  std::mt19937 rng(cfg.seed);
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  detail::shuffle_indices(perm, rng);
  int n_val = static_cast<int>(std::lround(cfg.val_fraction * n));
  n_val = std::clamp(n_val, 0, n - 1);
  std::vector<TrainSample> train_set, val_set;
  for (int i = 0; i < n - n_val; ++i) train_set.push_back(all[perm[i]]);
  for (int i = n - n_val; i < n; ++i) val_set.push_back(all[perm[i]]);
  const std::vector<TrainSample>& eval_set = val_set.empty() ? train_set : val_set;

  // Square-root-moderated balanced weights: raw inverse frequency lets a
  // near-empty class dominate the h-class loss on heavily skewed datasets.
  std::array<double, kHClasses> weights{1.0, 1.0, 1.0, 1.0};
  if (cfg.class_weights) {
    std::array<int, kHClasses> count{};
    for (const TrainSample& s : train_set) ++count[s.hclass];
    for (int c = 0; c < kHClasses; ++c)
      if (count[c] > 0)
        weights[c] = std::sqrt(static_cast<double>(train_set.size()) /
                               (kHClasses * count[c]));
  }

  TrainResult result{initial, {}};
  Model best = initial;
  double best_val = std::numeric_limits<double>::infinity();
  AdamState adam;
  Gradients grads;
  double lr = cfg.learning_rate;
  int since_best = 0, plateau = 0;

  std::vector<int> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    detail::shuffle_indices(order, rng);
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
      std::vector<TrainSample> batch;
      for (std::size_t i = at; i < std::min(order.size(), at + cfg.batch_size); ++i)
        batch.push_back(train_set[order[i]]);
      loss_and_gradient(result.model, batch, weights, &grads,
                        cfg.dropout ? &rng : nullptr);
      adam_step(result.model, grads, adam, lr);
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_and_gradient(result.model, train_set, weights, nullptr);
    st.val_loss = loss_and_gradient(result.model, eval_set, weights, nullptr);
    const HeadAccuracy acc = evaluate_accuracy(result.model, eval_set);
    st.acc_h = acc.h;
    st.acc_son = acc.son;
    result.history.push_back(st);

    if (st.val_loss < best_val) {
      best_val = st.val_loss;
      best = result.model;
      since_best = 0;
      plateau = 0;
    } else {
      ++since_best;
      ++plateau;
    }
    if (plateau >= cfg.lr_patience) {
      lr *= cfg.lr_factor;
      plateau = 0;
    }
    if (since_best >= cfg.stop_patience) break;
  }
  if (!result.history.empty()) result.model = best;
  return result;
}

inline constexpr const char* kHistoryHeader =
    "epoch,train_loss,val_loss,acc_h,acc_p1,acc_p2,acc_p3,acc_p4";

inline void write_history_csv(const std::vector<EpochStats>& history, std::ostream& out) {
  out << kHistoryHeader << "\n";
  for (const EpochStats& e : history) {
    out << e.epoch << ',' << hpfem::detail::g17(e.train_loss) << ','
        << hpfem::detail::g17(e.val_loss) << ',' << hpfem::detail::g17(e.acc_h);
    for (double a : e.acc_son) out << ',' << hpfem::detail::g17(a);
    out << "\n";
  }
}

inline void write_history_csv(const std::vector<EpochStats>& history,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_history_csv(history, out);
}

// ---------------------------------------------------------------------------
// Model file: one text header, one architecture line, one line per tensor
// with its dimensions followed by row-major values at 17 significant digits.
// ---------------------------------------------------------------------------

inline constexpr const char* kModelMagic = "hp-oracle-mlp v1";

inline void save_model(const Model& m, std::ostream& out) {
  out << kModelMagic << "\n";
  out << "arch input " << m.arch.input << " trunk " << m.arch.trunk.size();
  for (int w : m.arch.trunk) out << ' ' << w;
  out << " branch " << m.arch.branch.size();
  for (int w : m.arch.branch) out << ' ' << w;
  out << " dropout " << hpfem::detail::g17(m.arch.dropout_rate) << " seed " << m.seed
      << "\n";
  for (const Layer& l : m.layers) {
    out << "W " << l.W.rows() << ' ' << l.W.cols();
    for (int r = 0; r < l.W.rows(); ++r)
      for (int c = 0; c < l.W.cols(); ++c) out << ' ' << hpfem::detail::g17(l.W(r, c));
    out << "\nb " << l.b.size();
    for (int r = 0; r < l.b.size(); ++r) out << ' ' << hpfem::detail::g17(l.b(r));
    out << "\n";
  }
}

inline void save_model(const Model& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  save_model(m, out);
}

inline Model load_model(std::istream& in, const std::string& origin = "") {
  const std::string suffix = origin.empty() ? "" : " in " + origin;
  auto fail = [&](const std::string& msg) -> void {
    throw std::runtime_error("invalid model file" + suffix + ": " + msg);
  };
  std::string line;
  if (!std::getline(in, line) || line != kModelMagic) fail("bad magic line");
  if (!std::getline(in, line)) fail("missing architecture line");
  std::istringstream arch_ss(line);
  std::string tok;
  Model m;
  int n_trunk = 0, n_branch = 0;
  if (!(arch_ss >> tok) || tok != "arch") fail("bad architecture line");
  if (!(arch_ss >> tok >> m.arch.input) || tok != "input") fail("bad input field");
  if (!(arch_ss >> tok >> n_trunk) || tok != "trunk" || n_trunk < 1)
    fail("bad trunk field");
  m.arch.trunk.resize(n_trunk);
  for (int& w : m.arch.trunk)
    if (!(arch_ss >> w)) fail("bad trunk widths");
  if (!(arch_ss >> tok >> n_branch) || tok != "branch" || n_branch < 1)
    fail("bad branch field");
  m.arch.branch.resize(n_branch);
  for (int& w : m.arch.branch)
    if (!(arch_ss >> w)) fail("bad branch widths");
  if (!(arch_ss >> tok >> m.arch.dropout_rate) || tok != "dropout")
    fail("bad dropout field");
  if (!(arch_ss >> tok >> m.seed) || tok != "seed") fail("bad seed field");
  validate_architecture(m.arch);

  for (const auto& [rows, cols] : detail::layer_shapes(m.arch)) {
    Layer l;
    std::string kind;
    long r_in = 0, c_in = 0;
    if (!(in >> kind >> r_in >> c_in) || kind != "W" || r_in != rows || c_in != cols)
      fail("weight tensor header mismatch");
    l.W.resize(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        if (!(in >> l.W(r, c))) fail("truncated weight tensor");
    if (!(in >> kind >> r_in) || kind != "b" || r_in != rows)
      fail("bias tensor header mismatch");
    l.b.resize(rows);
    for (int r = 0; r < rows; ++r)
      if (!(in >> l.b(r))) fail("truncated bias tensor");
    if (!l.W.allFinite() || !l.b.allFinite()) fail("non-finite parameter");
    m.layers.push_back(std::move(l));
  }
  std::string extra;
  if (in >> extra) fail("trailing content");
  return m;
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return load_model(in, path);
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

// Argmax decode of the network heads for one element. An h-class of None
// whose son orders match the current ones means "leave unchanged". Son
// orders are clamped into the mesh's legal range: a predicted 0 falls back
// to the parent's order, nothing ever drops below the parent, and orders cap
// at 9.
inline std::optional<Refinement> predict_refinement(const Model& m, const Element& e) {
  const HeadProbs p = forward(m, encode_input(e));
  const auto argmax = [](const auto& arr) {
    return static_cast<int>(std::max_element(arr.begin(), arr.end()) - arr.begin());
  };
  const int h = argmax(p.h);
  const auto son_orders = [&](int k) {
    int px = argmax(p.son[k][0]);
    int py = argmax(p.son[k][1]);
    if (px == 0) px = e.orders.px;
    if (py == 0) py = e.orders.py;
    px = std::min(std::max(px, e.orders.px), kMaxOrder);
    py = std::min(std::max(py, e.orders.py), kMaxOrder);
    return Orders{px, py};
  };
  switch (static_cast<HClass>(h)) {
    case HClass::None: {
      const Orders o = son_orders(0);
      if (o == e.orders) return std::nullopt;
      return Refinement::p_ref(o);
    }
    case HClass::HX: return Refinement::h_x(son_orders(0), son_orders(1));
    case HClass::HY: return Refinement::h_y(son_orders(0), son_orders(1));
    case HClass::HXY:
      return Refinement::h_xy(son_orders(0), son_orders(1), son_orders(2), son_orders(3));
  }
  throw std::logic_error("predict_refinement: bad h-class argmax");
}

}  // namespace hpfem::dnn
