#pragma once

// 1D hierarchical shape functions on the reference interval [0,1], tensorized
// quadrilateral bases, and Gauss-Legendre quadrature rules mapped to [0,1].

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace hpfem {

inline constexpr int kMaxOrder = 9;
inline constexpr int kMaxQuadPoints = 16;

// Legendre polynomial P_n and its derivative on [-1,1], by the three-term
// recurrence. Stable for the small n used here.
inline std::pair<double, double> legendre(int n, double t) {
  if (n < 0) throw std::invalid_argument("legendre: negative degree");
  double p_prev = 1.0, d_prev = 0.0;  // P_0, P_0'
  if (n == 0) return {p_prev, d_prev};
  double p = t, d = 1.0;  // P_1, P_1'
  for (int k = 2; k <= n; ++k) {
    const double p_next = ((2 * k - 1) * t * p - (k - 1) * p_prev) / k;
    const double d_next = d_prev + (2 * k - 1) * p;
    p_prev = p;
    d_prev = d;
    p = p_next;
    d = d_next;
  }
  return {p, d};
}

struct Shape1D {
  double value;
  double derivative;
};

// Hierarchical 1D basis: chi_1 = 1-xi, chi_2 = xi,
// chi_{k+2} = xi(1-xi) P_{k-1}(2xi-1) for k >= 1.
// Valid indices are 1 <= k <= p+1 for a basis of order p.
inline Shape1D shape_1d(int k, int p, double xi) {
  if (p < 1) throw std::invalid_argument("shape_1d: order must be >= 1");
  if (k < 1 || k > p + 1) throw std::out_of_range("shape_1d: index out of range");
  if (k == 1) return {1.0 - xi, -1.0};
  if (k == 2) return {xi, 1.0};
  const auto [pv, pd] = legendre(k - 3, 2.0 * xi - 1.0);
  const double bubble = xi * (1.0 - xi);
  return {bubble * pv, (1.0 - 2.0 * xi) * pv + 2.0 * bubble * pd};
}

// Fixed-order view of the 1D basis.
struct ShapeSet1D {
  int p;
  explicit ShapeSet1D(int order) : p(order) {
    if (order < 1) throw std::invalid_argument("ShapeSet1D: order must be >= 1");
  }
  int count() const { return p + 1; }
  Shape1D at(int k, double xi) const { return shape_1d(k, p, xi); }
};

struct QuadratureRule {
  std::vector<double> nodes;    // in (0,1)
  std::vector<double> weights;  // positive, sum to 1
};

namespace detail {

inline QuadratureRule build_gauss_rule(int n) {
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 1; i <= n; ++i) {
    // Chebyshev initial guess, then Newton on P_n over [-1,1].
    double x = std::cos(M_PI * (i - 0.25) / (n + 0.5));
    double pd = 1.0;
    for (int it = 0; it < 100; ++it) {
      const auto [pv, pdv] = legendre(n, x);
      pd = pdv;
      const double dx = pv / pd;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * pd * pd);
    // Map [-1,1] -> [0,1]; roots come out in descending order, store ascending.
    rule.nodes[n - i] = 0.5 * (1.0 + x);
    rule.weights[n - i] = 0.5 * w;
  }
  return rule;
}

}  // namespace detail

// Gauss-Legendre rule with n points on [0,1], exact for degree 2n-1.
// Rules are built once and cached; safe for concurrent readers.
inline const QuadratureRule& gauss_rule(int n) {
  if (n < 1 || n > kMaxQuadPoints)
    throw std::invalid_argument("gauss_rule: point count out of range");
  static const std::vector<QuadratureRule> rules = [] {
    std::vector<QuadratureRule> all;
    all.reserve(kMaxQuadPoints);
    for (int k = 1; k <= kMaxQuadPoints; ++k) all.push_back(detail::build_gauss_rule(k));
    return all;
  }();
  return rules[n - 1];
}

// Full tensor-product basis on the reference square, orders (px,py).
// Slot (i,j), 0-based, is chi_{i+1}(xi) chi_{j+1}(eta) at index j*(px+1)+i.
struct TensorBasisEval {
  int nx = 0, ny = 0;
  std::vector<double> value;
  std::vector<double> grad_xi;
  std::vector<double> grad_eta;
  int count() const { return nx * ny; }
  int index(int i, int j) const { return j * nx + i; }
};

inline TensorBasisEval element_basis_eval(int px, int py, double xi, double eta) {
  if (px < 1 || py < 1) throw std::invalid_argument("element_basis_eval: orders must be >= 1");
  TensorBasisEval out;
  out.nx = px + 1;
  out.ny = py + 1;
  std::vector<Shape1D> fx(out.nx), fy(out.ny);
  for (int i = 0; i < out.nx; ++i) fx[i] = shape_1d(i + 1, px, xi);
  for (int j = 0; j < out.ny; ++j) fy[j] = shape_1d(j + 1, py, eta);
  const int n = out.nx * out.ny;
  out.value.resize(n);
  out.grad_xi.resize(n);
  out.grad_eta.resize(n);
  for (int j = 0; j < out.ny; ++j) {
    for (int i = 0; i < out.nx; ++i) {
      const int idx = out.index(i, j);
      out.value[idx] = fx[i].value * fy[j].value;
      out.grad_xi[idx] = fx[i].derivative * fy[j].value;
      out.grad_eta[idx] = fx[i].value * fy[j].derivative;
    }
  }
  return out;
}

}  // namespace hpfem
