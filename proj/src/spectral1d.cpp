#include "stepgl/spectral1d.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>

namespace stepgl::spectral1d {

void Grid1D::validate() const {
  require(n >= 3, "Grid1D: need at least 3 nodes");
  require(t_max > t_min, "Grid1D: t_max must exceed t_min");
  require(spacing() > 0.0, "Grid1D: spacing must be positive");
}

Tridiagonal degennes_fiber_matrix(double xi, const Grid1D& grid) {
  grid.validate();
  require(grid.t_min == 0.0, "degennes fiber: grid must start at t = 0");
  const double h = grid.spacing();
  const double inv_h2 = 1.0 / (h * h);
  const int m = grid.n - 1;  // node n-1 carries the Dirichlet condition
  Tridiagonal out;
  out.diag.resize(m);
  out.off.resize(m - 1);
  for (int k = 0; k < m; ++k) {
    const double t = grid.node(k);
    out.diag[k] = 2.0 * inv_h2 + (t - xi) * (t - xi);
  }
  for (int k = 0; k + 1 < m; ++k) out.off[k] = -inv_h2;
  // Ghost reflection gives row 0 = (2u0 - 2u1)/h^2; with the half-cell mass
  // at t = 0 the symmetric form has coupling -sqrt(2)/h^2.
  out.off[0] = -std::sqrt(2.0) * inv_h2;
  return out;
}

Tridiagonal step_fiber_matrix(double a, double xi, const Grid1D& grid) {
  grid.validate();
  const double h = grid.spacing();
  const double inv_h2 = 1.0 / (h * h);
  const int m = grid.n - 2;
  require(m >= 1, "step fiber: grid has no interior nodes");
  Tridiagonal out;
  out.diag.resize(m);
  out.off.assign(m - 1, -inv_h2);
  for (int k = 0; k < m; ++k) {
    const double t = grid.node(k + 1);
    const double primitive = t > 0.0 ? t : a * t;
    out.diag[k] = 2.0 * inv_h2 + (primitive - xi) * (primitive - xi);
  }
  return out;
}

namespace {

// LDL^T of a symmetric positive definite tridiagonal matrix.
struct TridiagonalFactor {
  std::vector<double> d;
  std::vector<double> l;

  explicit TridiagonalFactor(const Tridiagonal& m) : d(m.size()), l(m.size() > 0 ? m.size() - 1 : 0) {
    d[0] = m.diag[0];
    for (std::size_t k = 1; k < m.size(); ++k) {
      l[k - 1] = m.off[k - 1] / d[k - 1];
      d[k] = m.diag[k] - l[k - 1] * m.off[k - 1];
      if (!(d[k] > 0.0)) throw Error("tridiagonal factorization: matrix not positive definite");
    }
  }

  void solve(std::vector<double>& x) const {
    const std::size_t n = d.size();
    for (std::size_t k = 1; k < n; ++k) x[k] -= l[k - 1] * x[k - 1];
    for (std::size_t k = 0; k < n; ++k) x[k] /= d[k];
    for (std::size_t k = n - 1; k-- > 0;) x[k] -= l[k] * x[k + 1];
  }
};

void multiply(const Tridiagonal& m, const std::vector<double>& x, std::vector<double>& y) {
  const std::size_t n = m.size();
  y.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    double v = m.diag[k] * x[k];
    if (k > 0) v += m.off[k - 1] * x[k - 1];
    if (k + 1 < n) v += m.off[k] * x[k + 1];
    y[k] = v;
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

}  // namespace

TridiagonalEigenpair lowest_eigenpair(const Tridiagonal& m, double tol, int max_iterations) {
  require(m.size() >= 1, "lowest_eigenpair: empty matrix");
  const TridiagonalFactor factor(m);
  const std::size_t n = m.size();
  // Rayleigh quotient in difference form, x'Ax = sum_k s_k x_k^2 - sum_k off_k (x_{k+1} - x_k)^2,
  // avoids the O(eps / h^2) cancellation of the plain product.
  std::vector<double> site(n);
  double norm_inf = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    site[k] = m.diag[k] + (k > 0 ? m.off[k - 1] : 0.0) + (k + 1 < n ? m.off[k] : 0.0);
    norm_inf = std::max(norm_inf, std::abs(m.diag[k]) + (k > 0 ? std::abs(m.off[k - 1]) : 0.0) +
                                      (k + 1 < n ? std::abs(m.off[k]) : 0.0));
  }
  auto rayleigh = [&](const std::vector<double>& x) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += site[k] * x[k] * x[k];
    for (std::size_t k = 0; k + 1 < n; ++k) s -= m.off[k] * (x[k + 1] - x[k]) * (x[k + 1] - x[k]);
    return s;
  };
  const double noise = 64.0 * std::numeric_limits<double>::epsilon() * norm_inf;

  std::vector<double> x(n, 1.0);
  std::vector<double> mx;
  double previous = 0.0;
  TridiagonalEigenpair out;
  for (int it = 1; it <= max_iterations; ++it) {
    factor.solve(x);
    const double scale = 1.0 / std::sqrt(dot(x, x));
    for (double& v : x) v *= scale;
    const double rq = rayleigh(x);
    out.iterations = it;
    if (it > 1 && std::abs(rq - previous) <= tol * std::abs(rq) + noise) {
      multiply(m, x, mx);
      double r2 = 0.0;
      for (std::size_t k = 0; k < n; ++k) r2 += (mx[k] - rq * x[k]) * (mx[k] - rq * x[k]);
      out.value = rq;
      out.residual = std::sqrt(r2);
      out.vector = std::move(x);
      return out;
    }
    previous = rq;
  }
  multiply(m, x, mx);
  double r2 = 0.0;
  for (std::size_t k = 0; k < n; ++k) r2 += (mx[k] - previous * x[k]) * (mx[k] - previous * x[k]);
  throw ConvergenceError("inverse iteration did not converge", std::sqrt(r2));
}

double degennes_fiber_eigenvalue(double xi, const Grid1D& grid) {
  return lowest_eigenpair(degennes_fiber_matrix(xi, grid)).value;
}

double step_fiber_eigenvalue(double a, double xi, const Grid1D& grid, bool validation) {
  const bool physical = a >= -1.0 && a < 1.0 && a != 0.0;
  require(physical || (validation && a == 1.0),
          "step fiber: a must lie in [-1,1) \\ {0} (a = 1 only in validation mode)");
  return lowest_eigenpair(step_fiber_matrix(a, xi, grid)).value;
}

Grid1D default_halfline_grid() { return Grid1D{0.0, 20.0, 4001}; }
Grid1D default_line_grid() { return Grid1D{-20.0, 20.0, 8001}; }

namespace {

using FiberFunction = std::function<double(double xi, const Grid1D& grid)>;

struct GoldenResult {
  double xi;
  double value;
};

GoldenResult golden_section(const FiberFunction& f, const Grid1D& grid, double lo, double hi, double width) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = f(x1, grid);
  double f2 = f(x2, grid);
  while (hi - lo > width) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = f(x1, grid);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = f(x2, grid);
    }
  }
  // Endpoints of the window are candidates when the curve is monotone there.
  GoldenResult best = f1 <= f2 ? GoldenResult{x1, f1} : GoldenResult{x2, f2};
  return best;
}

Grid1D refine(const Grid1D& g) { return Grid1D{g.t_min, g.t_max, 2 * g.n - 1}; }

FiberEigenvalueCurve minimize_fiber(const FiberFunction& f, Grid1D grid, double window_lo, double window_hi,
                                    double tol) {
  require(tol > 0.0, "fiber minimization: tol must be positive");
  constexpr double kScanStep = 0.05;
  constexpr int kMaxLevels = 8;

  FiberEigenvalueCurve curve;
  const int samples = static_cast<int>(std::lround((window_hi - window_lo) / kScanStep)) + 1;
  for (int k = 0; k < samples; ++k) {
    const double xi = std::min(window_hi, window_lo + k * kScanStep);
    curve.xi_values.push_back(xi);
    curve.lambda_values.push_back(f(xi, grid));
  }
  const auto best = std::min_element(curve.lambda_values.begin(), curve.lambda_values.end());
  const std::size_t idx = static_cast<std::size_t>(best - curve.lambda_values.begin());
  double lo = curve.xi_values[idx == 0 ? 0 : idx - 1];
  double hi = curve.xi_values[std::min(idx + 1, curve.xi_values.size() - 1)];

  GoldenResult current = golden_section(f, grid, lo, hi, tol);
  if (*best < current.value) current = {curve.xi_values[idx], *best};

  for (int level = 1; level <= kMaxLevels; ++level) {
    const Grid1D finer = refine(grid);
    const double half = std::max(10.0 * tol, 0.02);
    const double flo = std::max(window_lo, current.xi - half);
    const double fhi = std::min(window_hi, current.xi + half);
    GoldenResult next = golden_section(f, finer, flo, fhi, tol);
    const double previous = current.value;
    const double change = std::abs(next.value - previous);
    curve.extrapolated = next.value + (next.value - previous) / 3.0;
    current = next;
    grid = finer;
    curve.refinement_change = change;
    if (change < tol) {
      curve.minimizing_xi = current.xi;
      curve.minimum = current.value;
      curve.grid_nodes = grid.n;
      return curve;
    }
    if (level == kMaxLevels) {
      std::ostringstream msg;
      msg << "fiber minimization: refinement budget exhausted; last two iterates "
          << previous << " and " << current.value;
      throw ConvergenceError(msg.str(), change);
    }
  }
  return curve;  // unreachable
}

std::mutex theta0_mutex;
std::optional<double> theta0_value;
double theta0_tol = 0.0;

void store_theta0(double value, double tol) {
  std::lock_guard lock(theta0_mutex);
  if (!theta0_value || tol <= theta0_tol) {
    theta0_value = value;
    theta0_tol = tol;
  }
}

}  // namespace

FiberEigenvalueCurve compute_theta0(double tol) {
  auto f = [](double xi, const Grid1D& g) { return degennes_fiber_eigenvalue(xi, g); };
  FiberEigenvalueCurve curve = minimize_fiber(f, default_halfline_grid(), -2.0, 4.0, tol);
  store_theta0(curve.minimum, tol);
  return curve;
}

FiberEigenvalueCurve compute_beta(double a, double tol, bool validation) {
  const bool physical = a >= -1.0 && a < 1.0 && a != 0.0;
  require(physical || (validation && a == 1.0),
          "compute_beta: a must lie in [-1,1) \\ {0} (a = 1 only in validation mode)");
  const Grid1D grid = default_line_grid();
  auto f = [a](double xi, const Grid1D& g) { return lowest_eigenpair(step_fiber_matrix(a, xi, g)).value; };
  // For a > 0 the band function decreases towards |a| as xi -> -inf, so the
  // scan window is widened until the a-side well sits well inside the box.
  const double lo = a > 0.0 ? std::min(-2.0, -0.5 * a * grid.t_max) : -2.0;
  return minimize_fiber(f, grid, lo, 4.0, tol);
}

std::optional<double> cached_theta0() {
  std::lock_guard lock(theta0_mutex);
  return theta0_value;
}

double theta0() {
  if (auto v = cached_theta0()) return *v;
  return compute_theta0(1e-7).minimum;
}

void write_curve_csv(const FiberEigenvalueCurve& curve, std::ostream& out) {
  out << "xi,lambda\n";
  out.precision(17);
  for (std::size_t k = 0; k < curve.xi_values.size(); ++k)
    out << curve.xi_values[k] << ',' << curve.lambda_values[k] << '\n';
}

}  // namespace stepgl::spectral1d
