#pragma once

// Fibered 1D eigenvalue problems: the de Gennes half-line operator
//   -d^2/dt^2 + (t - xi)^2  on (0, inf), Neumann at t = 0,
// and the whole-line step operator
//   -d^2/dt^2 + (At(t) - xi)^2,  At(t) = t for t > 0, a t for t < 0.
// Minimizing the lowest fiber eigenvalue over xi gives Theta0 and beta_a.

#include <iosfwd>
#include <optional>
#include <vector>

#include "stepgl/common.hpp"

namespace stepgl::spectral1d {

struct Grid1D {
  double t_min = 0.0;
  double t_max = 20.0;
  int n = 4001;

  double spacing() const { return (t_max - t_min) / (n - 1); }
  double node(int k) const { return t_min + k * spacing(); }
  void validate() const;
};

// Symmetric tridiagonal matrix; off[k] couples unknowns k and k+1.
struct Tridiagonal {
  std::vector<double> diag;
  std::vector<double> off;

  std::size_t size() const { return diag.size(); }
};

struct FiberEigenvalueCurve {
  std::vector<double> xi_values;
  std::vector<double> lambda_values;
  double minimizing_xi = 0.0;
  double minimum = 0.0;
  // Grid on which `minimum` was obtained and the change from the previous
  // refinement level.
  int grid_nodes = 0;
  double refinement_change = 0.0;
  // Richardson estimate (h^2 extrapolation) from the last two levels.
  double extrapolated = 0.0;
};

// Matrix of the discretized de Gennes fiber. Unknowns are the nodes on
// [0, t_max); the Neumann condition uses ghost-node reflection and the
// first row is symmetrized by the half-cell weight.
Tridiagonal degennes_fiber_matrix(double xi, const Grid1D& grid);

// Matrix of the discretized step fiber on [t_min, t_max] with Dirichlet
// conditions at both ends (interior nodes only).
Tridiagonal step_fiber_matrix(double a, double xi, const Grid1D& grid);

struct TridiagonalEigenpair {
  double value = 0.0;
  std::vector<double> vector;
  double residual = 0.0;
  int iterations = 0;
};

// Lowest eigenpair by inverse iteration with a direct tridiagonal solve.
// The matrix must be positive definite (true for both fiber operators).
TridiagonalEigenpair lowest_eigenpair(const Tridiagonal& m, double tol = 1e-14,
                                      int max_iterations = 2000);

double degennes_fiber_eigenvalue(double xi, const Grid1D& grid);

// `a` must lie in [-1, 1) \ {0}; a = 1 is accepted when `validation` is set.
double step_fiber_eigenvalue(double a, double xi, const Grid1D& grid, bool validation = false);

Grid1D default_halfline_grid();
Grid1D default_line_grid();

// Theta0: coarse scan of xi on [-2, 4], golden-section refinement to width
// `tol`, then grid doubling until the minimum moves by less than `tol`.
FiberEigenvalueCurve compute_theta0(double tol);

// beta_a by the same procedure applied to the step fiber.
FiberEigenvalueCurve compute_beta(double a, double tol, bool validation = false);

// Process-wide cache of the most accurate Theta0 computed so far
// (compute_theta0 fills it). Empty until compute_theta0 has run.
std::optional<double> cached_theta0();

// Cached Theta0, computing it at tol = 1e-7 on first use.
double theta0();

// CSV with header "xi,lambda".
void write_curve_csv(const FiberEigenvalueCurve& curve, std::ostream& out);

}  // namespace stepgl::spectral1d
