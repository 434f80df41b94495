#include "oracles.hpp"

#include <lapacke.h>

#include <cmath>
#include <stdexcept>

namespace oracle {

double lowest_symmetric(std::vector<double> a, int n) {
  std::vector<double> w(n);
  std::vector<lapack_int> isuppz(2);
  lapack_int found = 0;
  const lapack_int info = LAPACKE_dsyevr(LAPACK_ROW_MAJOR, 'N', 'I', 'U', n, a.data(), n, 0.0, 0.0, 1, 1, 0.0,
                                         &found, w.data(), nullptr, 1, isuppz.data());
  if (info != 0 || found != 1) throw std::runtime_error("dsyevr failed");
  return w[0];
}

double lowest_hermitian(std::vector<std::complex<double>> a, int n) {
  std::vector<double> w(n);
  std::vector<lapack_int> isuppz(2);
  lapack_int found = 0;
  auto* data = reinterpret_cast<lapack_complex_double*>(a.data());
  const lapack_int info = LAPACKE_zheevr(LAPACK_ROW_MAJOR, 'N', 'I', 'U', n, data, n, 0.0, 0.0, 1, 1, 0.0, &found,
                                         w.data(), nullptr, 1, isuppz.data());
  if (info != 0 || found != 1) throw std::runtime_error("zheevr failed");
  return w[0];
}

double degennes_dense(double xi, double t_max, int n) {
  const double h = t_max / (n - 1);
  const int m = n - 1;
  // Energy sum_k (u_{k+1}-u_k)^2/h + sum_k h_k V_k u_k^2, masses h_k = h (h/2 at 0).
  std::vector<double> k(static_cast<std::size_t>(m) * m, 0.0);
  std::vector<double> mass(m, h);
  mass[0] = h / 2.0;
  for (int i = 0; i < m; ++i) {
    const double t = i * h;
    k[i * m + i] += mass[i] * (t - xi) * (t - xi);
    // link to the right neighbour (the last one is the Dirichlet node)
    k[i * m + i] += 1.0 / h;
    if (i + 1 < m) {
      k[(i + 1) * m + i + 1] += 1.0 / h;
      k[i * m + i + 1] -= 1.0 / h;
      k[(i + 1) * m + i] -= 1.0 / h;
    }
  }
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) k[i * m + j] /= std::sqrt(mass[i] * mass[j]);
  return lowest_symmetric(std::move(k), m);
}

double step_dense(double a, double xi, double t_max, int n) {
  const double h = 2.0 * t_max / (n - 1);
  const int m = n - 2;
  std::vector<double> k(static_cast<std::size_t>(m) * m, 0.0);
  for (int i = 0; i < m; ++i) {
    const double t = -t_max + (i + 1) * h;
    const double prim = t > 0.0 ? t : a * t;
    k[i * m + i] = 2.0 / (h * h) + (prim - xi) * (prim - xi);
    if (i + 1 < m) {
      k[i * m + i + 1] = -1.0 / (h * h);
      k[(i + 1) * m + i] = -1.0 / (h * h);
    }
  }
  return lowest_symmetric(std::move(k), m);
}

namespace {

// Second component of the wedge potential, written out per sector.
double wedge_a2(double alpha, double a, double x1, double x2) {
  const double theta = std::atan2(x2, x1);
  const bool first = theta <= alpha;
  const double cot = std::cos(alpha) / std::sin(alpha);
  if (alpha < M_PI / 2 - 1e-15) return first ? x1 + (a - 1.0) * cot * x2 : a * x1;
  if (alpha > M_PI / 2 + 1e-15) return first ? x1 : a * x1 + (1.0 - a) * cot * x2;
  return first ? x1 : a * x1;
}

}  // namespace

double magnetic_graph_dense(const std::vector<double>& x, const std::vector<double>& y,
                            const std::vector<GraphEdge>& edges, const std::vector<double>& diag_extra,
                            const std::vector<double>& mass, double alpha, double a, double scale) {
  const int n = static_cast<int>(mass.size());
  std::vector<std::complex<double>> k(static_cast<std::size_t>(n) * n, 0.0);
  for (const GraphEdge& e : edges) {
    const double mx = 0.5 * (x[e.from] + x[e.to]);
    const double my = 0.5 * (y[e.from] + y[e.to]);
    const double phi = scale * wedge_a2(alpha, a, mx, my) * (y[e.to] - y[e.from]);
    const std::complex<double> link = e.weight * std::exp(std::complex<double>(0.0, phi));
    k[e.from * n + e.from] += e.weight;
    k[e.to * n + e.to] += e.weight;
    k[e.to * n + e.from] -= link;
    k[e.from * n + e.to] -= std::conj(link);
  }
  for (int i = 0; i < n; ++i) k[i * n + i] += diag_extra[i];
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) k[i * n + j] /= std::sqrt(mass[i] * mass[j]);
  return lowest_hermitian(std::move(k), n);
}

namespace {

// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = z;
    w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
}

}  // namespace

double gaussian_bump_J(double b, double alpha, double a, double cx, double cy, double s, double R) {
  std::vector<double> xr, wr, xt, wt;
  gauss_legendre(600, xr, wr);
  gauss_legendre(300, xt, wt);
  double total = 0.0;
  for (const auto [t0, t1] : {std::pair{0.0, alpha}, std::pair{alpha, M_PI}}) {
    for (std::size_t i = 0; i < xr.size(); ++i) {
      const double r = 0.5 * R * (xr[i] + 1.0);
      for (std::size_t j = 0; j < xt.size(); ++j) {
        const double t = t0 + 0.5 * (t1 - t0) * (xt[j] + 1.0);
        const double x1 = r * std::cos(t), x2 = r * std::sin(t);
        const double dx = x1 - cx, dy = x2 - cy;
        const double u = std::exp(-(dx * dx + dy * dy) / (2.0 * s * s));
        const double grad2 = (dx * dx + dy * dy) / (s * s * s * s) * u * u;
        const double a2 = wedge_a2(alpha, a, x1, x2);
        const double density = b * (grad2 + a2 * a2 * u * u) - u * u + 0.5 * u * u * u * u;
        total += 0.25 * R * (t1 - t0) * wr[i] * wt[j] * r * density;
      }
    }
  }
  return total;
}

}  // namespace oracle
