#include "stepgl/gldomain.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <random>

#include "stepgl/effective.hpp"
#include "stepgl/spectral1d.hpp"

namespace stepgl::gl {

using ComplexSparse = Eigen::SparseMatrix<Complex>;
using RealSparse = Eigen::SparseMatrix<double>;

struct GLFactorizations {
  RealSparse neg_laplacian;  // -L on faces, Dirichlet outside the disk
  Eigen::SimplicialLDLT<RealSparse> laplacian;
  ComplexSparse preconditioner;  // K_F + kappa^2 M
  Eigen::SimplicialLLT<ComplexSparse, Eigen::Lower> psi;
};

double StepFieldGeometry::field_at(Vec2 x) const {
  if (validation) return 1.0;
  return in_omega1(x) ? 1.0 : a;
}

StepFieldGeometry build_geometry(double rho, double chord_offset, double a, bool validation) {
  require(std::isfinite(rho) && rho > 0.0, "build_geometry: rho must be positive");
  require(std::isfinite(chord_offset), "build_geometry: chord offset must be finite");
  require(std::abs(chord_offset) < rho * (1.0 - 1e-9),
          "build_geometry: degenerate geometry, the chord does not cut the disk transversally");
  if (validation)
    require(a == 1.0, "build_geometry: validation mode requires a = 1");
  else
    require(a >= -1.0 && a < 1.0 && a != 0.0, "build_geometry: a must lie in [-1, 1) without 0");
  StepFieldGeometry g;
  g.rho = rho;
  g.chord_offset = chord_offset;
  g.a = a;
  g.validation = validation;
  const double half = std::sqrt(rho * rho - chord_offset * chord_offset);
  g.points = {Vec2{half, chord_offset}, Vec2{-half, chord_offset}};
  const double t = std::asin(chord_offset / rho);
  g.point_angles = {t, kPi - t};
  const double alpha = std::acos(chord_offset / rho);
  g.alpha = {alpha, alpha};
  return g;
}

DiskMeshOptions DiskMeshOptions::adapted(const StepFieldGeometry& geometry, double kappa, double b,
                                         double resolution) {
  require(kappa > 0.0 && b > 0.0, "DiskMeshOptions::adapted: kappa and b must be positive");
  require(resolution > 0.0 && resolution <= 1.0, "DiskMeshOptions::adapted: resolution must be in (0, 1]");
  const double length = 1.0 / (kappa * std::sqrt(b));
  DiskMeshOptions o;
  o.boundary_spacing = resolution * length;
  o.far_spacing = 2.5 * resolution * length;
  o.fine_width = 16.0 * length;
  o.radial_spacing = resolution * length;
  o.fine_depth = 6.0 * length;
  o.growth = 1.06;
  o.max_radial_spacing = std::min(std::max(o.radial_spacing, 0.05 * geometry.rho), 5.0 * resolution * length);
  return o;
}

DiskMeshOptions DiskMeshOptions::uniform(double spacing) {
  require(spacing > 0.0, "DiskMeshOptions::uniform: spacing must be positive");
  DiskMeshOptions o;
  o.boundary_spacing = o.far_spacing = o.radial_spacing = o.max_radial_spacing = spacing;
  o.fine_width = 0.0;
  o.fine_depth = std::numeric_limits<double>::infinity();
  o.growth = 1.0;
  return o;
}

namespace {

// Spacings from one end of a segment of length `half`, fine for `width`
// and then growing geometrically up to `coarse`, rescaled to sum to `half`.
std::vector<double> graded(double half, double fine, double coarse, double width, double growth) {
  std::vector<double> out;
  double covered = 0.0, previous = fine;
  while (covered < half) {
    const double s = covered < width ? fine : std::min(coarse, previous * growth);
    out.push_back(s);
    covered += s;
    previous = s;
  }
  for (double& s : out) s *= half / covered;
  return out;
}

std::vector<double> arc_spacings(double length, const DiskMeshOptions& o) {
  std::vector<double> half = graded(0.5 * length, o.boundary_spacing, o.far_spacing, o.fine_width, o.growth);
  std::vector<double> full = half;
  full.insert(full.end(), half.rbegin(), half.rend());
  return full;
}

}  // namespace

DiskMesh make_disk_mesh(const StepFieldGeometry& geometry, const DiskMeshOptions& o) {
  require(o.boundary_spacing > 0.0 && o.far_spacing >= o.boundary_spacing, "make_disk_mesh: invalid arc spacings");
  require(o.radial_spacing > 0.0 && o.max_radial_spacing >= o.radial_spacing,
          "make_disk_mesh: invalid radial spacings");
  require(o.growth >= 1.0 && o.fine_width >= 0.0 && o.fine_depth >= 0.0, "make_disk_mesh: invalid grading");
  const double rho = geometry.rho;
  require(o.boundary_spacing < 0.25 * rho && o.radial_spacing < 0.25 * rho, "make_disk_mesh: spacing too coarse");

  DiskMesh mesh;
  mesh.rho = rho;
  const double t1 = geometry.point_angles[0], t2 = geometry.point_angles[1];
  const std::vector<double> upper = arc_spacings(rho * (t2 - t1), o);
  const std::vector<double> lower = arc_spacings(rho * (2.0 * kPi - (t2 - t1)), o);
  mesh.theta.push_back(t1);
  for (std::size_t k = 0; k + 1 < upper.size(); ++k) mesh.theta.push_back(mesh.theta.back() + upper[k] / rho);
  mesh.point_lines = {0, static_cast<int>(mesh.theta.size())};
  mesh.theta.push_back(t2);
  for (std::size_t k = 0; k + 1 < lower.size(); ++k) mesh.theta.push_back(mesh.theta.back() + lower[k] / rho);
  const int nl = mesh.n_lines();
  mesh.dtheta.resize(nl);
  for (int j = 0; j < nl; ++j)
    mesh.dtheta[j] = (j + 1 < nl ? mesh.theta[j + 1] : mesh.theta[0] + 2.0 * kPi) - mesh.theta[j];

  std::vector<double> radial;
  {
    double depth = 0.0, previous = o.radial_spacing;
    while (depth < rho) {
      const double s = depth < o.fine_depth ? o.radial_spacing : std::min(o.max_radial_spacing, previous * o.growth);
      radial.push_back(s);
      depth += s;
      previous = s;
    }
    for (double& s : radial) s *= rho / depth;
  }
  const int nr = static_cast<int>(radial.size());
  mesh.radii.assign(nr + 1, 0.0);
  mesh.radii[nr] = rho;
  for (int k = 0; k < nr - 1; ++k) mesh.radii[nr - 1 - k] = mesh.radii[nr - k] - radial[k];
  mesh.radii[0] = 0.0;
  require(mesh.radii[1] > 0.0, "make_disk_mesh: radial partition failed");

  // Dual radii: half[0] is the centre cell, half[i] = (r_i + r_{i+1}) / 2, half[nr] = rho.
  std::vector<double> half(nr + 1);
  half[0] = 0.5 * mesh.radii[1];
  for (int i = 1; i < nr; ++i) half[i] = 0.5 * (mesh.radii[i] + mesh.radii[i + 1]);
  half[nr] = rho;
  auto dual_angle = [&](int j) { return 0.5 * (mesh.dtheta[(j + nl - 1) % nl] + mesh.dtheta[j]); };

  mesh.nodes.push_back({0.0, 0.0});
  mesh.mass.push_back(kPi * half[0] * half[0]);
  mesh.on_boundary.push_back(0);
  for (int i = 1; i <= nr; ++i)
    for (int j = 0; j < nl; ++j) {
      const double r = mesh.radii[i];
      mesh.nodes.push_back({r * std::cos(mesh.theta[j]), r * std::sin(mesh.theta[j])});
      mesh.mass.push_back(0.5 * (half[i] * half[i] - half[i - 1] * half[i - 1]) * dual_angle(j));
      mesh.on_boundary.push_back(i == nr ? 1 : 0);
    }
  for (const int p : {0, 1}) mesh.nodes[mesh.node(nr, mesh.point_lines[p])] = geometry.points[p];

  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < nl; ++j) {
      DiskLink e;
      e.from = mesh.node(i, j);
      e.to = mesh.node(i + 1, j);
      e.length = mesh.radii[i + 1] - mesh.radii[i];
      e.dual_length = half[i] * dual_angle(j);
      e.weight = e.dual_length / e.length;
      e.left = mesh.face(i, j);
      e.right = mesh.face(i, (j + nl - 1) % nl);
      mesh.links.push_back(e);
    }
  for (int i = 1; i <= nr; ++i)
    for (int j = 0; j < nl; ++j) {
      DiskLink e;
      e.from = mesh.node(i, j);
      e.to = mesh.node(i, (j + 1) % nl);
      e.length = mesh.radii[i] * mesh.dtheta[j];
      e.dual_length = half[i] - half[i - 1];
      e.weight = e.dual_length / e.length;
      e.left = mesh.face(i - 1, j);
      e.right = i < nr ? mesh.face(i, j) : -1;
      mesh.links.push_back(e);
    }
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < nl; ++j)
      mesh.face_area.push_back(0.5 * (mesh.radii[i + 1] * mesh.radii[i + 1] - mesh.radii[i] * mesh.radii[i]) *
                               mesh.dtheta[j]);
  return mesh;
}

FaceField face_field(const StepFieldGeometry& geometry, const DiskMesh& mesh) {
  FaceField out;
  out.average.resize(mesh.n_faces());
  const double c = geometry.chord_offset;
  const double a = geometry.validation ? 1.0 : geometry.a;
  const double slack = 1e-12 * geometry.rho;
  const int nl = mesh.n_lines();
  for (int i = 0; i < mesh.n_rings(); ++i)
    for (int j = 0; j < nl; ++j) {
      const double r0 = mesh.radii[i], r1 = mesh.radii[i + 1];
      const double t0 = mesh.theta[j], t1 = t0 + mesh.dtheta[j];
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (double r : {r0, r1})
        for (double t : {t0, t1}) {
          lo = std::min(lo, r * std::sin(t));
          hi = std::max(hi, r * std::sin(t));
        }
      for (double peak : {0.5 * kPi, 1.5 * kPi, 2.5 * kPi})
        if (t0 < peak && peak < t1) {
          lo = std::min(lo, r1 * std::sin(peak));
          hi = std::max(hi, r1 * std::sin(peak));
        }
      double fraction;
      if (lo >= c - slack) {
        fraction = 1.0;
      } else if (hi <= c + slack) {
        fraction = 0.0;
      } else {
        constexpr int kSamples = 32;
        int inside = 0;
        for (int u = 0; u < kSamples; ++u)
          for (int v = 0; v < kSamples; ++v) {
            const double r = std::sqrt(r0 * r0 + (u + 0.5) / kSamples * (r1 * r1 - r0 * r0));
            const double t = t0 + (v + 0.5) / kSamples * (t1 - t0);
            inside += r * std::sin(t) >= c;
          }
        fraction = static_cast<double>(inside) / (kSamples * kSamples);
      }
      const int f = mesh.face(i, j);
      out.average[f] = a + (1.0 - a) * fraction;
      out.cut_constant += mesh.face_area[f] * fraction * (1.0 - fraction) * (1.0 - a) * (1.0 - a);
    }
  return out;
}

namespace {

RealSparse negative_face_laplacian(const DiskMesh& mesh) {
  std::vector<Eigen::Triplet<double>> t;
  for (const DiskLink& e : mesh.links) {
    const double c = 1.0 / e.weight;
    if (e.left >= 0) t.emplace_back(e.left, e.left, c);
    if (e.right >= 0) t.emplace_back(e.right, e.right, c);
    if (e.left >= 0 && e.right >= 0) {
      t.emplace_back(e.left, e.right, -c);
      t.emplace_back(e.right, e.left, -c);
    }
  }
  RealSparse m(mesh.n_faces(), mesh.n_faces());
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

// (G q)_e = (q_R - q_L) / w_e with q = 0 outside the disk.
Eigen::VectorXd apply_G(const DiskMesh& mesh, const Eigen::VectorXd& q) {
  Eigen::VectorXd out(mesh.links.size());
  for (std::size_t k = 0; k < mesh.links.size(); ++k) {
    const DiskLink& e = mesh.links[k];
    const double r = e.right >= 0 ? q[e.right] : 0.0, l = e.left >= 0 ? q[e.left] : 0.0;
    out[k] = (r - l) / e.weight;
  }
  return out;
}

Eigen::VectorXd apply_GT(const DiskMesh& mesh, const Eigen::VectorXd& x) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(mesh.n_faces());
  for (std::size_t k = 0; k < mesh.links.size(); ++k) {
    const DiskLink& e = mesh.links[k];
    if (e.right >= 0) out[e.right] += x[k] / e.weight;
    if (e.left >= 0) out[e.left] -= x[k] / e.weight;
  }
  return out;
}

// Counter-clockwise circulation of the link field around every face.
Eigen::VectorXd circulation(const DiskMesh& mesh, const Eigen::VectorXd& a) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(mesh.n_faces());
  for (std::size_t k = 0; k < mesh.links.size(); ++k) {
    const DiskLink& e = mesh.links[k];
    if (e.left >= 0) out[e.left] += a[k];
    if (e.right >= 0) out[e.right] -= a[k];
  }
  return out;
}

double field_energy(const GLProblem& p, const Eigen::VectorXd& circ) {
  const DiskMesh& mesh = *p.mesh;
  double s = 0.0;
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const double d = circ[f] - p.B0.average[f] * mesh.face_area[f];
    s += d * d / mesh.face_area[f];
  }
  return p.kappa * p.kappa * p.H * p.H * (s + p.B0.cut_constant);
}

std::vector<Complex> link_phases(const GLProblem& p, const Eigen::VectorXd& a) {
  std::vector<Complex> out(a.size());
  const double kh = p.kappa * p.H;
  for (Eigen::Index k = 0; k < a.size(); ++k) out[k] = std::polar(1.0, kh * a[k]);
  return out;
}

double kinetic_energy(const DiskMesh& mesh, const std::vector<Complex>& phase, const Eigen::VectorXcd& psi) {
  double s = 0.0;
  for (std::size_t k = 0; k < mesh.links.size(); ++k) {
    const DiskLink& e = mesh.links[k];
    s += e.weight * std::norm(psi[e.to] - phase[k] * psi[e.from]);
  }
  return s;
}

Eigen::VectorXcd apply_K(const DiskMesh& mesh, const std::vector<Complex>& phase, const Eigen::VectorXcd& psi) {
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(psi.size());
  for (std::size_t k = 0; k < mesh.links.size(); ++k) {
    const DiskLink& e = mesh.links[k];
    const Complex d = psi[e.to] - phase[k] * psi[e.from];
    out[e.to] += e.weight * d;
    out[e.from] -= e.weight * std::conj(phase[k]) * d;
  }
  return out;
}

ComplexSparse assemble_K(const DiskMesh& mesh, const std::vector<Complex>& phase) {
  std::vector<Eigen::Triplet<Complex>> t;
  t.reserve(4 * mesh.links.size());
  for (std::size_t k = 0; k < mesh.links.size(); ++k) {
    const DiskLink& e = mesh.links[k];
    t.emplace_back(e.to, e.to, e.weight);
    t.emplace_back(e.from, e.from, e.weight);
    t.emplace_back(e.to, e.from, -e.weight * phase[k]);
    t.emplace_back(e.from, e.to, -e.weight * std::conj(phase[k]));
  }
  ComplexSparse K(mesh.size(), mesh.size());
  K.setFromTriplets(t.begin(), t.end());
  return K;
}

GLEnergy energy_of(const GLProblem& p, const Eigen::VectorXcd& psi, const Eigen::VectorXd& a) {
  const DiskMesh& mesh = *p.mesh;
  require(psi.size() == mesh.size() && a.size() == static_cast<Eigen::Index>(mesh.links.size()),
          "evaluate_GL: state does not match mesh");
  GLEnergy out;
  GLBreakdown& e = out.breakdown;
  e.kinetic = kinetic_energy(mesh, link_phases(p, a), psi);
  const double k2 = p.kappa * p.kappa;
  for (int n = 0; n < mesh.size(); ++n) {
    const double s = std::norm(psi[n]);
    e.quadratic += k2 * mesh.mass[n] * s;
    e.quartic += 0.5 * k2 * mesh.mass[n] * s * s;
  }
  e.field = field_energy(p, circulation(mesh, a));
  out.energy = e.total();
  return out;
}

Eigen::VectorXcd psi_gradient(const GLProblem& p, const std::vector<Complex>& phase, const Eigen::VectorXcd& psi) {
  const DiskMesh& mesh = *p.mesh;
  Eigen::VectorXcd g = apply_K(mesh, phase, psi);
  const double k2 = p.kappa * p.kappa;
  for (int n = 0; n < mesh.size(); ++n) g[n] += k2 * mesh.mass[n] * (std::norm(psi[n]) - 1.0) * psi[n];
  return g;
}

// dE/da_e of the kinetic term.
Eigen::VectorXd link_current(const GLProblem& p, const std::vector<Complex>& phase, const Eigen::VectorXcd& psi) {
  const DiskMesh& mesh = *p.mesh;
  const double kh = p.kappa * p.H;
  Eigen::VectorXd j(mesh.links.size());
  for (std::size_t k = 0; k < mesh.links.size(); ++k) {
    const DiskLink& e = mesh.links[k];
    j[k] = 2.0 * e.weight * kh * (std::conj(psi[e.to]) * phase[k] * psi[e.from]).imag();
  }
  return j;
}

Eigen::VectorXd solve_laplacian(const GLProblem& p, const Eigen::VectorXd& x) {
  return -p.factors->laplacian.solve(x);
}

// Gradient with respect to s = circulation of A - F, for A - F = G L^-1 s.
Eigen::VectorXd field_gradient(const GLProblem& p, const std::vector<Complex>& phase, const Eigen::VectorXcd& psi,
                               const Eigen::VectorXd& circ) {
  const DiskMesh& mesh = *p.mesh;
  Eigen::VectorXd g = solve_laplacian(p, apply_GT(mesh, link_current(p, phase, psi)));
  const double c = 2.0 * p.kappa * p.kappa * p.H * p.H;
  for (int f = 0; f < mesh.n_faces(); ++f) g[f] += c * (circ[f] / mesh.face_area[f] - p.B0.average[f]);
  return g;
}

double psi_dual_norm(const GLProblem& p, const Eigen::VectorXcd& g) {
  return std::sqrt(std::max(0.0, g.dot(p.factors->psi.solve(g)).real()));
}

double field_dual_norm(const GLProblem& p, const Eigen::VectorXd& g, const std::vector<unsigned char>* mask = nullptr) {
  const DiskMesh& mesh = *p.mesh;
  const double c = 2.0 * p.kappa * p.kappa * p.H * p.H;
  double s = 0.0;
  for (int f = 0; f < mesh.n_faces(); ++f)
    if (!mask || (*mask)[f]) s += g[f] * g[f] * mesh.face_area[f] / c;
  return std::sqrt(s);
}

}  // namespace

FieldF compute_F(const StepFieldGeometry& geometry, const DiskMesh& mesh) {
  const RealSparse negL = negative_face_laplacian(mesh);
  Eigen::SimplicialLDLT<RealSparse> solver(negL);
  if (solver.info() != Eigen::Success) throw ConvergenceError("compute_F: face Laplacian factorization failed", 0.0);
  const FaceField B0 = face_field(geometry, mesh);
  Eigen::VectorXd rhs(mesh.n_faces());
  for (int f = 0; f < mesh.n_faces(); ++f) rhs[f] = -B0.average[f] * mesh.face_area[f];
  FieldF out;
  out.phi = solver.solve(rhs);
  const double solve_residual = (negL * out.phi - rhs).norm() / std::max(1e-300, rhs.norm());
  if (!(solve_residual < 1e-8)) throw ConvergenceError("compute_F: Poisson solve inaccurate", solve_residual);
  out.links = apply_G(mesh, out.phi);
  const Eigen::VectorXd circ = circulation(mesh, out.links);
  double s = B0.cut_constant;
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const double d = circ[f] / mesh.face_area[f] - B0.average[f];
    s += mesh.face_area[f] * d * d;
  }
  out.curl_residual = std::sqrt(s);
  std::vector<double> outflow(mesh.size(), 0.0);
  for (std::size_t k = 0; k < mesh.links.size(); ++k) {
    const DiskLink& e = mesh.links[k];
    outflow[e.from] += out.links[k] * e.weight;
    outflow[e.to] -= out.links[k] * e.weight;
  }
  for (int n = 0; n < mesh.size(); ++n)
    out.max_divergence = std::max(out.max_divergence, std::abs(outflow[n]) / mesh.mass[n]);
  return out;
}

GLProblem make_gl_problem(const StepFieldGeometry& geometry, std::shared_ptr<const DiskMesh> mesh, double kappa,
                          double b) {
  require(mesh != nullptr, "make_gl_problem: mesh is required");
  require(std::isfinite(kappa) && kappa > 0.0, "make_gl_problem: kappa must be positive");
  require(std::isfinite(b) && b > 0.0, "make_gl_problem: b must be positive");
  require(std::abs(mesh->rho - geometry.rho) <= 1e-12 * geometry.rho, "make_gl_problem: mesh radius mismatch");
  GLProblem p;
  p.geometry = geometry;
  p.mesh = std::move(mesh);
  p.kappa = kappa;
  p.b = b;
  p.H = b * kappa;
  p.F = compute_F(geometry, *p.mesh);
  p.B0 = face_field(geometry, *p.mesh);

  auto factors = std::make_shared<GLFactorizations>();
  factors->neg_laplacian = negative_face_laplacian(*p.mesh);
  factors->laplacian.compute(factors->neg_laplacian);
  factors->preconditioner = assemble_K(*p.mesh, link_phases(p, p.F.links));
  for (int n = 0; n < p.mesh->size(); ++n) factors->preconditioner.coeffRef(n, n) += kappa * kappa * p.mesh->mass[n];
  factors->psi.compute(factors->preconditioner);
  if (factors->laplacian.info() != Eigen::Success || factors->psi.info() != Eigen::Success)
    throw Error("make_gl_problem: factorization failed");
  p.factors = std::move(factors);
  return p;
}

GLEnergy evaluate_GL(const GLState& state, const GLProblem& problem) {
  require(state.kappa == problem.kappa && state.H == problem.H, "evaluate_GL: state parameters do not match problem");
  return energy_of(problem, state.psi, state.A);
}

GLEnergy evaluate_GL(const GLState& state, const StepFieldGeometry& geometry, const DiskMesh& mesh) {
  require(state.kappa > 0.0 && state.H > 0.0, "evaluate_GL: state has no parameters");
  GLProblem p;
  p.geometry = geometry;
  p.mesh = std::shared_ptr<const DiskMesh>(&mesh, [](const DiskMesh*) {});
  p.kappa = state.kappa;
  p.H = state.H;
  p.b = state.H / state.kappa;
  p.B0 = face_field(geometry, mesh);
  return energy_of(p, state.psi, state.A);
}

GLState normal_state(const GLProblem& problem) {
  GLState s;
  s.psi = Eigen::VectorXcd::Zero(problem.mesh->size());
  s.A = problem.F.links;
  s.kappa = problem.kappa;
  s.H = problem.H;
  const GLEnergy e = energy_of(problem, s.psi, s.A);
  s.energy = e.energy;
  s.breakdown = e.breakdown;
  return s;
}

namespace {

// Bilinear interpolation in (r, theta) of a half-disk field; zero beyond R.
Complex interpolate(const halfplane::HalfDiskMesh& mesh, const Eigen::VectorXcd& u, Vec2 y) {
  const double r = norm(y);
  const double outer = (mesh.n_rings + 1) * mesh.dr;
  if (r >= outer) return 0.0;
  const double t = std::clamp(std::atan2(std::max(0.0, y.y), y.x), 0.0, kPi);
  const int nl = mesh.n_lines();
  int j = static_cast<int>(std::upper_bound(mesh.theta.begin(), mesh.theta.end(), t) - mesh.theta.begin()) - 1;
  j = std::clamp(j, 0, nl - 2);
  const double tj = (t - mesh.theta[j]) / (mesh.theta[j + 1] - mesh.theta[j]);
  const double rr = r / mesh.dr;
  const int i = static_cast<int>(std::floor(rr));
  const double ti = rr - i;
  auto at = [&](int ring, int line) -> Complex {
    if (ring == 0) return u[0];
    if (ring > mesh.n_rings) return 0.0;
    return u[mesh.index(ring, line)];
  };
  const Complex inner = (1.0 - tj) * at(i, j) + tj * at(i, j + 1);
  const Complex outer_v = (1.0 - tj) * at(i + 1, j) + tj * at(i + 1, j + 1);
  return (1.0 - ti) * inner + ti * outer_v;
}

struct Frame {
  Vec2 origin, e1, e2;
  double orientation = 1.0;
  double scale = 1.0;
  Vec2 map(Vec2 x) const {
    const Vec2 d = x - origin;
    return {scale * dot(e1, d), std::max(0.0, scale * dot(e2, d))};
  }
};

Frame frame_at(const GLProblem& p, int j) {
  const StepFieldGeometry& g = p.geometry;
  Frame f;
  f.origin = g.points[j];
  f.e2 = (-1.0 / g.rho) * g.points[j];
  const Vec2 ccw{f.e2.y, -f.e2.x};
  // Tangent pointing into Omega_1: counter-clockwise at p_1, clockwise at p_2.
  f.e1 = j == 0 ? ccw : -1.0 * ccw;
  f.orientation = f.e1.x * f.e2.y - f.e1.y * f.e2.x;
  f.scale = std::sqrt(p.kappa * p.H);
  return f;
}

std::vector<std::vector<std::pair<int, int>>> adjacency(const DiskMesh& mesh) {
  std::vector<std::vector<std::pair<int, int>>> adj(mesh.size());
  for (std::size_t k = 0; k < mesh.links.size(); ++k) {
    adj[mesh.links[k].from].emplace_back(static_cast<int>(k), mesh.links[k].to);
    adj[mesh.links[k].to].emplace_back(static_cast<int>(k), mesh.links[k].from);
  }
  return adj;
}

}  // namespace

Eigen::VectorXcd transplant_seed(const GLProblem& problem, const GLOptions& options,
                                 std::vector<std::string>* warnings) {
  const DiskMesh& mesh = *problem.mesh;
  const StepFieldGeometry& g = problem.geometry;
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(mesh.size());
  auto warn = [&](const std::string& w) {
    if (warnings) warnings->push_back(w);
  };
  const double floor = std::abs(g.a) * spectral1d::theta0();
  if (g.validation || !(problem.b > 1.0 / floor)) {
    warn("transplant seed unavailable outside the concentration regime; using a constant seed");
    psi.setConstant(options.constant_value);
    return psi;
  }
  const auto adj = adjacency(mesh);
  std::map<double, std::pair<std::shared_ptr<const halfplane::HalfDiskMesh>, Eigen::VectorXcd>> cache;
  for (int j = 0; j < 2; ++j) {
    const halfplane::WedgeParams wedge{g.alpha[j], g.a};
    auto it = cache.find(wedge.alpha);
    if (it == cache.end()) {
      auto hmesh = std::make_shared<const halfplane::HalfDiskMesh>(
          halfplane::make_half_disk_mesh(options.effective_R, options.effective_h, wedge.alpha));
      const effective::EffectiveProblem ep = effective::make_effective_problem(problem.b, wedge, hmesh);
      effective::MinimizerResult r = effective::minimize_J(ep);
      Eigen::VectorXcd v = r.state;
      if (r.trivial) {
        warn("effective minimizer is trivial; transplanting the scaled linear ground state");
        v = halfplane::lowest_eigenpair(*ep.op).vector;
        v *= 0.5 / effective::sup_norm(v);
      }
      it = cache.emplace(wedge.alpha, std::make_pair(hmesh, std::move(v))).first;
    }
    const halfplane::HalfDiskMesh& hmesh = *it->second.first;
    const Eigen::VectorXcd& v = it->second.second;
    const Frame fr = frame_at(problem, j);
    auto model = [&](Vec2 y) { return halfplane::wedge_potential(wedge, y); };

    // Gauge phase Phi with Phi_to - Phi_from = kappa H a_e - model phase, along a BFS tree.
    std::vector<double> phase(mesh.size(), 0.0);
    std::vector<unsigned char> seen(mesh.size(), 0);
    const int start = mesh.node(mesh.n_rings(), mesh.point_lines[j]);
    std::deque<int> queue{start};
    seen[start] = 1;
    const double kh = problem.kappa * problem.H;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      for (const auto& [k, w] : adj[u]) {
        if (seen[w]) continue;
        const DiskLink& e = mesh.links[k];
        const double step = kh * problem.F.links[k] -
                            fr.orientation * halfplane::link_phase(model, fr.map(mesh.nodes[e.from]),
                                                                   fr.map(mesh.nodes[e.to]));
        phase[w] = phase[u] + (e.from == u ? step : -step);
        seen[w] = 1;
        queue.push_back(w);
      }
    }
    for (int n = 0; n < mesh.size(); ++n) {
      Complex value = interpolate(hmesh, v, fr.map(mesh.nodes[n]));
      if (value == 0.0) continue;
      if (fr.orientation < 0) value = std::conj(value);
      psi[n] += std::polar(1.0, phase[n]) * value;
    }
  }
  return psi;
}

namespace {

Eigen::VectorXcd random_field(const GLProblem& p, std::uint64_t seed) {
  const DiskMesh& mesh = *p.mesh;
  std::mt19937_64 engine(seed);
  auto unit = [&] { return (engine() >> 11) * 0x1.0p-53; };
  constexpr int kBumps = 12;
  const double width = 0.15 * p.geometry.rho;
  std::vector<Vec2> centres;
  std::vector<Complex> weights;
  for (int k = 0; k < kBumps; ++k) {
    const double r = p.geometry.rho * std::sqrt(unit()), t = 2.0 * kPi * unit();
    centres.push_back({r * std::cos(t), r * std::sin(t)});
    weights.emplace_back(2.0 * unit() - 1.0, 2.0 * unit() - 1.0);
  }
  Eigen::VectorXcd psi(mesh.size());
  for (int n = 0; n < mesh.size(); ++n) {
    Complex v = 0.0;
    for (int k = 0; k < kBumps; ++k) {
      const Vec2 d = mesh.nodes[n] - centres[k];
      v += weights[k] * std::exp(-dot(d, d) / (2.0 * width * width));
    }
    psi[n] = v;
  }
  const double top = psi.cwiseAbs().maxCoeff();
  if (top > 0.0) psi *= 0.5 / top;
  return psi;
}

}  // namespace

GLResult minimize_GL(const GLProblem& problem, const GLOptions& options) {
  GLState initial = normal_state(problem);
  std::vector<std::string> warnings;
  switch (options.seed) {
    case Seed::Transplant: initial.psi = transplant_seed(problem, options, &warnings); break;
    case Seed::Constant: initial.psi.setConstant(options.constant_value); break;
    case Seed::Random: initial.psi = random_field(problem, options.random_seed); break;
  }
  GLResult r = minimize_GL(problem, initial, options);
  r.warnings.insert(r.warnings.begin(), warnings.begin(), warnings.end());
  return r;
}

GLResult minimize_GL(const StepFieldGeometry& geometry, double kappa, double b, std::shared_ptr<const DiskMesh> mesh,
                     const GLOptions& options) {
  return minimize_GL(make_gl_problem(geometry, std::move(mesh), kappa, b), options);
}

GLResult minimize_GL(const GLProblem& problem, const GLState& initial, const GLOptions& options) {
  const DiskMesh& mesh = *problem.mesh;
  require(initial.psi.size() == mesh.size() && initial.A.size() == static_cast<Eigen::Index>(mesh.links.size()),
          "minimize_GL: initial state does not match mesh");
  require(options.tol > 0.0 && options.max_sweeps > 0 && options.inner_iterations > 0,
          "minimize_GL: invalid options");
  GLResult out;
  const double floor = std::abs(problem.geometry.a) * spectral1d::theta0();
  if (!problem.geometry.validation && !(problem.b > 1.0 / floor))
    out.warnings.push_back("b <= 1 / (|a| Theta0): outside the concentration regime");

  const double k2 = problem.kappa * problem.kappa;
  const double kh = problem.kappa * problem.H;
  const double field_coef = k2 * problem.H * problem.H;
  const auto& P = problem.factors->psi;

  // A = F + G L^-1 s; only the divergence-free part of initial.A is kept.
  Eigen::VectorXd s = circulation(mesh, initial.A - problem.F.links);
  auto links_from = [&](const Eigen::VectorXd& sv) {
    return Eigen::VectorXd(problem.F.links + apply_G(mesh, solve_laplacian(problem, sv)));
  };
  Eigen::VectorXd a = links_from(s);
  Eigen::VectorXcd psi = initial.psi;
  std::vector<Complex> phase = link_phases(problem, a);

  out.initial = initial;
  out.initial.A = a;
  {
    const GLEnergy e0 = energy_of(problem, psi, a);
    out.initial.energy = e0.energy;
    out.initial.breakdown = e0.breakdown;
  }
  double energy = out.initial.energy;
  out.trace.push_back(energy);

  auto potential_increment = [&](const Eigen::VectorXcd& u, const Eigen::VectorXcd& step) {
    double d = 0.0;
    for (int n = 0; n < mesh.size(); ++n) {
      const double before = std::norm(u[n]);
      const double change = 2.0 * (std::conj(u[n]) * step[n]).real() + std::norm(step[n]);
      d += k2 * mesh.mass[n] * (-change + 0.5 * change * (2.0 * before + change));
    }
    return d;
  };
  auto kinetic_increment = [&](const Eigen::VectorXcd& u, const Eigen::VectorXcd& step) {
    double d = 0.0;
    for (std::size_t k = 0; k < mesh.links.size(); ++k) {
      const DiskLink& e = mesh.links[k];
      const Complex base = u[e.to] - phase[k] * u[e.from];
      const Complex delta = step[e.to] - phase[k] * step[e.from];
      d += e.weight * (2.0 * (std::conj(base) * delta).real() + std::norm(delta));
    }
    return d;
  };
  auto stalled = [&] {
    const int n = static_cast<int>(out.trace.size());
    if (n <= options.stall_window) return false;
    const double before = out.trace[n - 1 - options.stall_window];
    return std::abs(before - out.trace.back()) <= options.stall_rel * std::max(std::abs(out.trace.back()), 1e-300);
  };

  Eigen::VectorXcd g = psi_gradient(problem, phase, psi);
  Eigen::VectorXcd pg = P.solve(g);
  double gp = std::max(0.0, g.dot(pg).real());
  Eigen::VectorXd circ = circulation(mesh, a);
  Eigen::VectorXd gs = field_gradient(problem, phase, psi, circ);
  bool stop = false;

  for (int sweep = 0; sweep < options.max_sweeps && !stop; ++sweep) {
    out.sweeps = sweep + 1;
    // psi phase: preconditioned L-BFGS; P^-1 y is carried along so one solve per step suffices.
    std::deque<std::array<Eigen::VectorXcd, 3>> memory;  // s, y, P^-1 y
    std::deque<double> curvature_pairs;                   // 1 / Re<s, y>
    for (int it = 0; it < options.inner_iterations; ++it) {
      if (std::sqrt(gp) <= options.tol) break;
      Eigen::VectorXcd q = g;
      Eigen::VectorXcd r = pg;
      std::vector<double> alphas(memory.size());
      for (int k = static_cast<int>(memory.size()) - 1; k >= 0; --k) {
        alphas[k] = curvature_pairs[k] * memory[k][0].dot(q).real();
        q -= alphas[k] * memory[k][1];
        r -= alphas[k] * memory[k][2];
      }
      if (!memory.empty()) {
        const auto& last = memory.back();
        r *= 1.0 / (curvature_pairs.back() * last[1].dot(last[2]).real());
      }
      for (std::size_t k = 0; k < memory.size(); ++k) {
        const double beta = curvature_pairs[k] * memory[k][1].dot(r).real();
        r += (alphas[k] - beta) * memory[k][0];
      }
      double slope = -g.dot(r).real();
      if (!(slope < 0.0)) {
        memory.clear();
        curvature_pairs.clear();
        r = pg;
        slope = -gp;
      }
      Eigen::VectorXcd step;
      double delta = 0.0, t = 1.0;
      bool accepted = false;
      for (int tries = 0; tries < 60; ++tries) {
        step = -t * r;
        delta = kinetic_increment(psi, step) + potential_increment(psi, step);
        if (delta <= options.armijo * t * slope) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        stop = true;
        break;
      }
      psi += step;
      const Eigen::VectorXcd g_next = psi_gradient(problem, phase, psi);
      const Eigen::VectorXcd pg_next = P.solve(g_next);
      Eigen::VectorXcd y = g_next - g;
      const double sy = step.dot(y).real();
      if (sy > 1e-14 * std::sqrt(step.squaredNorm() * y.squaredNorm())) {
        memory.push_back({step, std::move(y), pg_next - pg});
        curvature_pairs.push_back(1.0 / sy);
        if (memory.size() > static_cast<std::size_t>(options.memory)) {
          memory.pop_front();
          curvature_pairs.pop_front();
        }
      }
      g = g_next;
      pg = pg_next;
      gp = std::max(0.0, g.dot(pg).real());
      energy += delta;
      out.trace.push_back(energy);
      ++out.iterations;
      if (stalled()) {
        stop = true;
        break;
      }
    }

    // A phase: one Gauss-Newton step in s.
    gs = field_gradient(problem, phase, psi, circ);
    const double gs_norm = field_dual_norm(problem, gs);
    if (gs_norm > options.tol) {
      Eigen::VectorXd curvature(mesh.links.size());
      for (std::size_t k = 0; k < mesh.links.size(); ++k) {
        const DiskLink& e = mesh.links[k];
        curvature[k] =
            std::max(0.0, 2.0 * e.weight * kh * kh * (std::conj(psi[e.to]) * phase[k] * psi[e.from]).real());
      }
      Eigen::VectorXd diag(mesh.n_faces());
      for (int f = 0; f < mesh.n_faces(); ++f) diag[f] = 2.0 * field_coef / mesh.face_area[f];
      auto hess = [&](const Eigen::VectorXd& d) {
        const Eigen::VectorXd da = apply_G(mesh, solve_laplacian(problem, d));
        return Eigen::VectorXd(diag.cwiseProduct(d) +
                               solve_laplacian(problem, apply_GT(mesh, curvature.cwiseProduct(da))));
      };
      // Preconditioned CG on hess(d) = -gs.
      Eigen::VectorXd d = Eigen::VectorXd::Zero(mesh.n_faces());
      Eigen::VectorXd r = -gs;
      Eigen::VectorXd z = r.cwiseQuotient(diag);
      Eigen::VectorXd dir = z;
      double rz = r.dot(z);
      const double rz0 = rz;
      for (int k = 0; k < options.cg_iterations && rz > options.cg_rel_tol * options.cg_rel_tol * rz0; ++k) {
        const Eigen::VectorXd hd = hess(dir);
        const double alpha = rz / dir.dot(hd);
        d += alpha * dir;
        r -= alpha * hd;
        z = r.cwiseQuotient(diag);
        const double rz_next = r.dot(z);
        dir = z + (rz_next / rz) * dir;
        rz = rz_next;
      }
      const double slope = gs.dot(d);
      if (slope < 0.0) {
        const Eigen::VectorXd da_full = apply_G(mesh, solve_laplacian(problem, d));
        double t = 1.0;
        for (int tries = 0; tries < 40; ++tries) {
          double delta = 0.0;
          for (std::size_t k = 0; k < mesh.links.size(); ++k) {
            const DiskLink& e = mesh.links[k];
            const double x = kh * t * da_full[k];
            const double sh = std::sin(0.5 * x);
            const Complex rotate(-2.0 * sh * sh, std::sin(x));
            delta -= 2.0 * e.weight * (std::conj(psi[e.to]) * phase[k] * rotate * psi[e.from]).real();
          }
          double fd = 0.0;
          for (int f = 0; f < mesh.n_faces(); ++f) {
            const double res = circ[f] - problem.B0.average[f] * mesh.face_area[f];
            const double ds = t * d[f];
            fd += (2.0 * res * ds + ds * ds) / mesh.face_area[f];
          }
          delta += field_coef * fd;
          if (delta <= options.armijo * t * slope) {
            s += t * d;
            a = links_from(s);
            circ = circulation(mesh, a);
            phase = link_phases(problem, a);
            energy += delta;
            out.trace.push_back(energy);
            break;
          }
          t *= 0.5;
        }
      }
      g = psi_gradient(problem, phase, psi);
      pg = P.solve(g);
      gp = std::max(0.0, g.dot(pg).real());
      gs = field_gradient(problem, phase, psi, circ);
    }
    out.psi_gradient = std::sqrt(gp);
    out.A_gradient = field_dual_norm(problem, gs);
    if (out.psi_gradient <= options.tol && out.A_gradient <= options.tol) break;
  }

  out.psi_gradient = std::sqrt(gp);
  out.A_gradient = field_dual_norm(problem, gs);
  out.converged = out.psi_gradient <= options.tol && out.A_gradient <= options.tol;
  out.state.psi = std::move(psi);
  out.state.A = std::move(a);
  out.state.kappa = problem.kappa;
  out.state.H = problem.H;
  const GLEnergy e = energy_of(problem, out.state.psi, out.state.A);
  out.state.energy = e.energy;
  out.state.breakdown = e.breakdown;
  return out;
}

GLResidual gl_residual(const GLState& state, const GLProblem& problem) {
  const DiskMesh& mesh = *problem.mesh;
  require(state.psi.size() == mesh.size() && state.A.size() == static_cast<Eigen::Index>(mesh.links.size()),
          "gl_residual: state does not match mesh");
  const std::vector<Complex> phase = link_phases(problem, state.A);
  const Eigen::VectorXcd g = psi_gradient(problem, phase, state.psi);
  const Eigen::VectorXd circ = circulation(mesh, state.A);
  const Eigen::VectorXd gs = field_gradient(problem, phase, state.psi, circ);
  GLResidual out;
  out.psi_residual = psi_dual_norm(problem, g);
  out.A_residual = field_dual_norm(problem, gs);
  Eigen::VectorXcd gb = Eigen::VectorXcd::Zero(g.size());
  for (int n = 0; n < mesh.size(); ++n)
    if (mesh.on_boundary[n]) gb[n] = g[n];
  std::vector<unsigned char> outer(mesh.n_faces(), 0);
  for (const DiskLink& e : mesh.links)
    if (e.right < 0 && e.left >= 0) outer[e.left] = 1;
  out.bc_residual = std::hypot(psi_dual_norm(problem, gb), field_dual_norm(problem, gs, &outer));
  return out;
}

AprioriReport apriori_check(const GLState& state, const GLProblem& problem) {
  const DiskMesh& mesh = *problem.mesh;
  require(state.psi.size() == mesh.size(), "apriori_check: state does not match mesh");
  AprioriReport r;
  r.sup_psi = state.psi.size() ? state.psi.cwiseAbs().maxCoeff() : 0.0;
  r.sup_ok = r.sup_psi <= 1.0 + 1e-3;
  double l2 = 0.0;
  for (int n = 0; n < mesh.size(); ++n) l2 += mesh.mass[n] * std::norm(state.psi[n]);
  if (l2 <= 0.0) return r;
  const double kinetic = kinetic_energy(mesh, link_phases(problem, state.A), state.psi);
  r.kinetic_ratio = std::sqrt(kinetic) / (problem.kappa * std::sqrt(l2));
  const Eigen::VectorXd diff = circulation(mesh, state.A - problem.F.links);
  double curl2 = 0.0;
  for (int f = 0; f < mesh.n_faces(); ++f) curl2 += diff[f] * diff[f] / mesh.face_area[f];
  r.field_ratio = problem.H * std::sqrt(curl2) / l2;
  return r;
}

double linear_threshold(const GLProblem& problem, double shift) {
  halfplane::MagneticOperator op;
  op.K = assemble_K(*problem.mesh, link_phases(problem, problem.F.links));
  op.mass = Eigen::Map<const Eigen::VectorXd>(problem.mesh->mass.data(), problem.mesh->size());
  halfplane::EigenOptions eig;
  eig.shift = shift * problem.kappa * problem.H;
  return halfplane::lowest_eigenpair(op, eig).value / (problem.kappa * problem.H);
}

std::vector<Vec2> nodal_vector_potential(const DiskMesh& mesh, const Eigen::VectorXd& links) {
  require(links.size() == static_cast<Eigen::Index>(mesh.links.size()), "nodal_vector_potential: size mismatch");
  std::vector<std::array<double, 5>> normal(mesh.size(), {0, 0, 0, 0, 0});  // txx txy tyy bx by
  for (std::size_t k = 0; k < mesh.links.size(); ++k) {
    const DiskLink& e = mesh.links[k];
    const Vec2 d = mesh.nodes[e.to] - mesh.nodes[e.from];
    const double len = norm(d);
    const Vec2 t = (1.0 / len) * d;
    const double v = links[k] / e.length;
    for (int n : {e.from, e.to}) {
      auto& m = normal[n];
      m[0] += t.x * t.x;
      m[1] += t.x * t.y;
      m[2] += t.y * t.y;
      m[3] += t.x * v;
      m[4] += t.y * v;
    }
  }
  std::vector<Vec2> out(mesh.size());
  for (int n = 0; n < mesh.size(); ++n) {
    const auto& m = normal[n];
    const double det = m[0] * m[2] - m[1] * m[1];
    out[n] = det > 0.0 ? Vec2{(m[2] * m[3] - m[1] * m[4]) / det, (m[0] * m[4] - m[1] * m[3]) / det} : Vec2{};
  }
  return out;
}

Eigen::VectorXd face_curl(const DiskMesh& mesh, const Eigen::VectorXd& links) {
  require(links.size() == static_cast<Eigen::Index>(mesh.links.size()), "face_curl: size mismatch");
  Eigen::VectorXd c = circulation(mesh, links);
  for (int f = 0; f < mesh.n_faces(); ++f) c[f] /= mesh.face_area[f];
  return c;
}

Eigen::VectorXd node_kinetic_energy(const GLState& state, const DiskMesh& mesh) {
  require(state.psi.size() == mesh.size() && state.A.size() == static_cast<Eigen::Index>(mesh.links.size()),
          "node_kinetic_energy: state does not match mesh");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(mesh.size());
  const double kh = state.kappa * state.H;
  for (std::size_t k = 0; k < mesh.links.size(); ++k) {
    const DiskLink& e = mesh.links[k];
    const double v = e.weight * std::norm(state.psi[e.to] - std::polar(1.0, kh * state.A[k]) * state.psi[e.from]);
    out[e.from] += 0.5 * v;
    out[e.to] += 0.5 * v;
  }
  return out;
}

}  // namespace stepgl::gl
