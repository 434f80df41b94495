#include "stepgl/halfplane.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "stepgl/spectral1d.hpp"

namespace stepgl::halfplane {

void WedgeParams::validate() const {
  require(alpha > 0.0 && alpha < kPi, "WedgeParams: alpha must lie in (0, pi)");
  require(a != 0.0, "WedgeParams: a must be nonzero");
  require(a >= -1.0 && (a < 1.0 || (validation && a == 1.0)),
          "WedgeParams: a must lie in [-1, 1) (a = 1 only in validation mode)");
}

HalfDiskMesh make_half_disk_mesh(double R, double h, double alpha, std::optional<double> reference_radius) {
  require(R > 0.0 && h > 0.0 && h < R, "half-disk mesh: need 0 < h < R");
  require(alpha > 0.0 && alpha < kPi, "half-disk mesh: alpha must lie in (0, pi)");
  const double r_ref = reference_radius.value_or(0.5 * R);
  require(r_ref > 0.0, "half-disk mesh: reference radius must be positive");

  HalfDiskMesh mesh;
  mesh.R = R;
  mesh.h = h;
  mesh.alpha = alpha;
  mesh.reference_radius = r_ref;
  const int n_total = std::max(2, static_cast<int>(std::lround(R / h)));
  mesh.dr = R / n_total;
  mesh.n_rings = n_total - 1;

  const int n1 = std::max(1, static_cast<int>(std::ceil(alpha * r_ref / h - 1e-9)));
  const int n2 = std::max(1, static_cast<int>(std::ceil((kPi - alpha) * r_ref / h - 1e-9)));
  mesh.theta.reserve(n1 + n2 + 1);
  for (int j = 0; j < n1; ++j) mesh.theta.push_back(alpha * j / n1);
  mesh.alpha_line = n1;
  mesh.theta.push_back(alpha);
  for (int j = 1; j < n2; ++j) mesh.theta.push_back(alpha + (kPi - alpha) * j / n2);
  mesh.theta.push_back(kPi);

  const int L = mesh.n_lines();
  std::vector<double> dtheta(L - 1), dbar(L, 0.0);
  for (int j = 0; j + 1 < L; ++j) dtheta[j] = mesh.theta[j + 1] - mesh.theta[j];
  for (int j = 0; j < L; ++j) {
    if (j > 0) dbar[j] += 0.5 * dtheta[j - 1];
    if (j + 1 < L) dbar[j] += 0.5 * dtheta[j];
  }

  const double dr = mesh.dr;
  const std::size_t n_nodes = 1 + static_cast<std::size_t>(mesh.n_rings) * L;
  mesh.nodes.reserve(n_nodes);
  mesh.mass.reserve(n_nodes);
  mesh.region.reserve(n_nodes);
  mesh.on_boundary.reserve(n_nodes);

  mesh.nodes.push_back({0.0, 0.0});
  mesh.mass.push_back(0.5 * kPi * 0.25 * dr * dr);
  mesh.region.push_back(Region::D1);
  mesh.on_boundary.push_back(1);

  for (int i = 1; i <= mesh.n_rings; ++i) {
    const double r = mesh.radius(i);
    for (int j = 0; j < L; ++j) {
      Vec2 p{r * std::cos(mesh.theta[j]), r * std::sin(mesh.theta[j])};
      if (j == 0) p = {r, 0.0};
      if (j == L - 1) p = {-r, 0.0};
      mesh.nodes.push_back(p);
      mesh.mass.push_back(r * dr * dbar[j]);
      mesh.region.push_back(j <= mesh.alpha_line ? Region::D1 : Region::D2);
      mesh.on_boundary.push_back(j == 0 || j == L - 1);
    }
  }

  for (int j = 0; j < L; ++j) mesh.edges.push_back({0, mesh.index(1, j), 0.5 * dbar[j]});
  for (int i = 1; i < mesh.n_rings; ++i)
    for (int j = 0; j < L; ++j) mesh.edges.push_back({mesh.index(i, j), mesh.index(i + 1, j), (i + 0.5) * dbar[j]});
  for (int i = 1; i <= mesh.n_rings; ++i)
    for (int j = 0; j + 1 < L; ++j)
      mesh.edges.push_back({mesh.index(i, j), mesh.index(i, j + 1), 1.0 / (i * dtheta[j])});
  for (int j = 0; j < L; ++j) {
    const Vec2 outer{R * std::cos(mesh.theta[j]), R * std::sin(mesh.theta[j])};
    mesh.arc_links.push_back({mesh.index(mesh.n_rings, j), outer, (mesh.n_rings + 0.5) * dbar[j]});
  }
  return mesh;
}

Region region_of(double alpha, Vec2 x) {
  const double theta = std::atan2(std::max(x.y, 0.0), x.x);
  return theta <= alpha ? Region::D1 : Region::D2;
}

Vec2 wedge_potential(const WedgeParams& params, Vec2 x) {
  const double alpha = params.alpha;
  const double a = params.a;
  const bool d1 = region_of(alpha, x) == Region::D1;
  double value;
  if (alpha == kPi / 2) {
    value = d1 ? x.x : a * x.x;
  } else if (alpha < kPi / 2) {
    value = d1 ? x.x + (a - 1.0) / std::tan(alpha) * x.y : a * x.x;
  } else {
    value = d1 ? x.x : a * x.x + (1.0 - a) / std::tan(alpha) * x.y;
  }
  return {0.0, value};
}

double link_phase(const VectorPotential& A, Vec2 p, Vec2 q) {
  static const double g = 0.5 * std::sqrt(0.6);
  const Vec2 d = q - p;
  const double f0 = dot(A(p + (0.5 - g) * d), d);
  const double f1 = dot(A(p + 0.5 * d), d);
  const double f2 = dot(A(p + (0.5 + g) * d), d);
  return (5.0 * f0 + 8.0 * f1 + 5.0 * f2) / 18.0;
}

MagneticOperator assemble_magnetic_laplacian(const VectorPotential& A, const HalfDiskMesh& mesh, double scale) {
  require(mesh.size() > 1 && !mesh.edges.empty(), "assemble_magnetic_laplacian: degenerate mesh");
  const int n = mesh.size();
  std::vector<Eigen::Triplet<Complex>> triplets;
  triplets.reserve(4 * mesh.edges.size() + mesh.arc_links.size());
  for (const Edge& e : mesh.edges) {
    require(e.weight > 0.0 && std::isfinite(e.weight), "assemble_magnetic_laplacian: degenerate edge");
    const double phi = scale * link_phase(A, mesh.nodes[e.from], mesh.nodes[e.to]);
    const Complex link = std::polar(e.weight, phi);
    triplets.emplace_back(e.from, e.from, e.weight);
    triplets.emplace_back(e.to, e.to, e.weight);
    triplets.emplace_back(e.to, e.from, -link);
    triplets.emplace_back(e.from, e.to, -std::conj(link));
  }
  for (const ArcLink& l : mesh.arc_links) triplets.emplace_back(l.node, l.node, l.weight);
  MagneticOperator op;
  op.K.resize(n, n);
  op.K.setFromTriplets(triplets.begin(), triplets.end());
  op.K.makeCompressed();
  op.mass = Eigen::Map<const Eigen::VectorXd>(mesh.mass.data(), n);
  return op;
}

MagneticOperator assemble_magnetic_laplacian(const WedgeParams& params, const HalfDiskMesh& mesh, double scale) {
  params.validate();
  require(std::abs(params.alpha - mesh.alpha) < 1e-14, "assemble_magnetic_laplacian: mesh is built for another alpha");
  return assemble_magnetic_laplacian([&params](Vec2 x) { return wedge_potential(params, x); }, mesh, scale);
}

double quadratic_form(const VectorPotential& A, const HalfDiskMesh& mesh, const Eigen::VectorXcd& u, double scale) {
  require(u.size() == mesh.size(), "quadratic_form: field does not match mesh");
  double q = 0.0;
  for (const Edge& e : mesh.edges) {
    const double phi = scale * link_phase(A, mesh.nodes[e.from], mesh.nodes[e.to]);
    q += e.weight * std::norm(u[e.to] - std::polar(1.0, phi) * u[e.from]);
  }
  for (const ArcLink& l : mesh.arc_links) q += l.weight * std::norm(u[l.node]);
  return q;
}

double l2_norm(const HalfDiskMesh& mesh, const Eigen::VectorXcd& u) {
  require(u.size() == mesh.size(), "l2_norm: field does not match mesh");
  double s = 0.0;
  for (int k = 0; k < mesh.size(); ++k) s += mesh.mass[k] * std::norm(u[k]);
  return std::sqrt(s);
}

EigenPair lowest_eigenpair(const MagneticOperator& op, const EigenOptions& options) {
  const Eigen::Index n = op.K.rows();
  require(n > 0 && op.K.cols() == n && op.mass.size() == n, "lowest_eigenpair: size mismatch");
  require(options.tol > 0.0 && options.krylov_dim >= 2 && options.max_restarts >= 1,
          "lowest_eigenpair: invalid options");
  require((op.mass.array() > 0.0).all(), "lowest_eigenpair: masses must be positive");

  // Symmetric form S = M^{-1/2} K M^{-1/2}.
  const Eigen::VectorXd dinv = op.mass.cwiseSqrt().cwiseInverse();
  SparseMatrix S = dinv.asDiagonal() * op.K * dinv.asDiagonal();
  // Residuals below this level are roundoff in S y.
  double row_max = 0.0;
  for (Eigen::Index c = 0; c < S.outerSize(); ++c) {
    double row = 0.0;
    for (SparseMatrix::InnerIterator it(S, c); it; ++it) row += std::abs(it.value());
    row_max = std::max(row_max, row);
  }
  const double floor = 100.0 * std::numeric_limits<double>::epsilon() * row_max;
  const double tol = std::max(options.tol, floor);
  SparseMatrix shifted = S;
  if (options.shift != 0.0) {
    SparseMatrix id(n, n);
    id.setIdentity();
    shifted -= options.shift * id;
  }
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower> solver(shifted);
  if (solver.info() != Eigen::Success)
    throw InvalidArgument("lowest_eigenpair: shifted operator is not positive definite (shift above the spectrum bottom)");

  const int m = static_cast<int>(std::min<Eigen::Index>(options.krylov_dim, n));
  Eigen::VectorXcd start(n);
  std::mt19937_64 engine(0x5eed);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double re = (engine() >> 11) * 0x1.0p-53 - 0.5;
    const double im = (engine() >> 11) * 0x1.0p-53 - 0.5;
    start[k] = Complex(1.0 + re, 0.2 * im);
  }
  start.normalize();

  EigenPair out;
  Eigen::MatrixXcd V(n, m + 1);
  std::vector<double> alpha(m), beta(m);
  double last_residual = 0.0;
  for (int restart = 0; restart < options.max_restarts; ++restart) {
    V.col(0) = start;
    int used = 0;
    Eigen::VectorXd ritz_vec;
    double theta = 0.0;
    for (int k = 0; k < m; ++k) {
      Eigen::VectorXcd w = solver.solve(V.col(k));
      ++out.iterations;
      alpha[k] = V.col(k).dot(w).real();
      w -= alpha[k] * V.col(k);
      if (k > 0) w -= beta[k - 1] * V.col(k - 1);
      for (int pass = 0; pass < 2; ++pass) {
        const Eigen::VectorXcd c = V.leftCols(k + 1).adjoint() * w;
        w -= V.leftCols(k + 1) * c;
      }
      beta[k] = w.norm();
      used = k + 1;
      const bool exhausted = beta[k] <= 1e-14 * std::abs(alpha[k]);
      const bool check = exhausted || used == m || used % 5 == 0;
      if (check) {
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(used, used);
        for (int i = 0; i < used; ++i) {
          T(i, i) = alpha[i];
          if (i + 1 < used) T(i, i + 1) = T(i + 1, i) = beta[i];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
        theta = es.eigenvalues()[used - 1];
        ritz_vec = es.eigenvectors().col(used - 1);
        // Residual estimate of the shift-inverted problem mapped back to S.
        const double estimate = beta[k] * std::abs(ritz_vec[used - 1]) / (theta * theta);
        if (exhausted || estimate < 0.1 * options.tol) break;
      }
      V.col(k + 1) = w / beta[k];
    }
    Eigen::VectorXcd y = V.leftCols(used) * ritz_vec.cast<Complex>();
    y.normalize();
    const double lambda = options.shift + 1.0 / theta;
    const Eigen::VectorXcd r = S * y - lambda * y;
    const double residual = r.norm();
    // Above options.tol but at the roundoff floor: accept once restarts stop helping.
    const bool stalled = restart > 0 && residual <= tol && residual > 0.5 * last_residual;
    last_residual = residual;
    if (residual <= options.tol || stalled) {
      out.value = y.dot(S * y).real();
      out.vector = dinv.asDiagonal() * y;
      out.residual = last_residual;
      return out;
    }
    start = y;
  }
  throw ConvergenceError("lowest_eigenpair: Lanczos did not converge", last_residual);
}

namespace {

SpectralResult finish(const WedgeParams& params, const HalfDiskMesh& mesh, const EigenPair& pair, double floor_tol) {
  SpectralResult out;
  out.eigenvalue = pair.value;
  out.eigenvector = pair.vector;
  out.residual = pair.residual;
  out.R = mesh.R;
  out.h = mesh.h;
  out.iterations = pair.iterations;
  out.near_essential_floor = pair.value >= std::abs(params.a) * spectral1d::theta0() - floor_tol;
  return out;
}

}  // namespace

SpectralResult compute_mu(const WedgeParams& params, const HalfDiskMesh& mesh, const MuOptions& options) {
  const MagneticOperator op = assemble_magnetic_laplacian(params, mesh);
  return finish(params, mesh, lowest_eigenpair(op, options.eigen), options.floor_tol);
}

SpectralResult compute_mu(const WedgeParams& params, double R, double h, const MuOptions& options) {
  params.validate();
  require(R >= 15.0, "compute_mu: R must be at least 15");
  require(h > 0.0 && h <= R / 100.0, "compute_mu: h must not exceed R / 100");
  return compute_mu(params, make_half_disk_mesh(R, h, params.alpha, options.reference_radius), options);
}

double essential_floor(double a) {
  require(a != 0.0 && a >= -1.0 && a <= 1.0, "essential_floor: a must lie in [-1, 1] without 0");
  const auto theta0 = spectral1d::cached_theta0();
  if (!theta0) throw Error("essential_floor: Theta0 is not available; run compute_theta0 first");
  return std::abs(a) * *theta0;
}

BoundStateReport check_bound_state(const WedgeParams& params, double R, double h, const MuOptions& options) {
  params.validate();
  spectral1d::theta0();
  MuOptions opts = options;
  if (!opts.reference_radius) opts.reference_radius = 0.5 * R;
  const SpectralResult coarse = compute_mu(params, R, h, opts);
  const SpectralResult fine = compute_mu(params, R, 0.5 * h, opts);
  BoundStateReport report;
  report.mu = fine.eigenvalue;
  report.mu_coarse = coarse.eigenvalue;
  report.margin = essential_floor(params.a) - fine.eigenvalue;
  report.error_estimate = std::abs(coarse.eigenvalue - fine.eigenvalue);
  report.status = report.margin > 2.0 * report.error_estimate ? BoundStatus::Bound : BoundStatus::Inconclusive;
  return report;
}

const char* to_string(BoundStatus status) {
  return status == BoundStatus::Bound ? "bound" : "inconclusive";
}

std::vector<double> ring_maxima(const HalfDiskMesh& mesh, const Eigen::VectorXcd& u) {
  require(u.size() == mesh.size(), "ring_maxima: field does not match mesh");
  std::vector<double> out(mesh.n_rings + 1, 0.0);
  out[0] = std::abs(u[0]);
  for (int i = 1; i <= mesh.n_rings; ++i)
    for (int j = 0; j < mesh.n_lines(); ++j) out[i] = std::max(out[i], std::abs(u[mesh.index(i, j)]));
  return out;
}

}  // namespace stepgl::halfplane
