#pragma once

#include <array>
#include <functional>

namespace hpfem {

// Boundary data for the Laplace model problem -div(grad u) = 0.
struct Problem {
  // Essential-boundary predicate, evaluated at boundary points. An edge is
  // Dirichlet when both endpoints and the midpoint satisfy it.
  std::function<bool(double, double)> is_dirichlet;
  // Essential boundary value; interpreted as zero when empty.
  std::function<double(double, double)> dirichlet_value;
  // Neumann flux at a boundary point with outward unit normal (nx, ny);
  // interpreted as zero when empty.
  std::function<double(double x, double y, double nx, double ny)> neumann;
  // Optional exact solution, for error reporting only.
  std::function<double(double, double)> exact;
  std::function<std::array<double, 2>(double, double)> exact_grad;
};

}  // namespace hpfem
