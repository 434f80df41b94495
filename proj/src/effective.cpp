#include "stepgl/effective.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "stepgl/spectral1d.hpp"

namespace stepgl::effective {

using halfplane::HalfDiskMesh;
using halfplane::MagneticOperator;

namespace {

void check_b(double b, const halfplane::WedgeParams& wedge) {
  require(std::isfinite(b) && b > 0.0, "effective problem: b must be positive");
  const double floor = std::abs(wedge.a) * spectral1d::theta0();
  require(b > 1.0 / floor, "effective problem: b must exceed 1 / (|a| Theta0)");
}

double unit(std::mt19937_64& engine) { return (engine() >> 11) * 0x1.0p-53; }

// J and its gradient from one product K u.
struct Evaluation {
  JValue value;
  Eigen::VectorXcd gradient;
};

Evaluation evaluate(const Eigen::VectorXcd& u, const EffectiveProblem& p, bool with_gradient) {
  const Eigen::VectorXcd Ku = p.op->K * u;
  const Eigen::VectorXd& m = p.op->mass;
  Evaluation out;
  EnergyBreakdown& e = out.value.breakdown;
  e.kinetic = p.b * u.dot(Ku).real();
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    const double s = std::norm(u[k]);
    e.quadratic += m[k] * s;
    e.quartic += 0.5 * m[k] * s * s;
  }
  out.value.energy = e.total();
  if (with_gradient) {
    out.gradient = p.b * Ku;
    for (Eigen::Index k = 0; k < u.size(); ++k) out.gradient[k] += m[k] * (std::norm(u[k]) - 1.0) * u[k];
  }
  return out;
}

double smooth_step(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double s = std::sin(0.5 * kPi * t);
  return s * s;
}

double distance_to_edge(double alpha, Vec2 x) {
  const Vec2 e{std::cos(alpha), std::sin(alpha)};
  const double t = dot(x, e);
  return t <= 0.0 ? norm(x) : norm(x - t * e);
}

}  // namespace

EffectiveProblem EffectiveProblem::with_b(double new_b) const {
  check_b(new_b, wedge);
  EffectiveProblem out = *this;
  out.b = new_b;
  return out;
}

EffectiveProblem make_effective_problem(double b, const halfplane::WedgeParams& wedge,
                                        std::shared_ptr<const HalfDiskMesh> mesh) {
  wedge.validate();
  require(mesh != nullptr, "effective problem: mesh is required");
  check_b(b, wedge);
  EffectiveProblem p;
  p.b = b;
  p.wedge = wedge;
  p.mesh = std::move(mesh);
  p.op = std::make_shared<const MagneticOperator>(halfplane::assemble_magnetic_laplacian(wedge, *p.mesh));
  return p;
}

JValue evaluate_J(const Eigen::VectorXcd& u, const EffectiveProblem& problem) {
  require(u.size() == problem.size(), "evaluate_J: field does not match mesh");
  return evaluate(u, problem, false).value;
}

Eigen::VectorXcd gradient_J(const Eigen::VectorXcd& u, const EffectiveProblem& problem) {
  require(u.size() == problem.size(), "gradient_J: field does not match mesh");
  return evaluate(u, problem, true).gradient;
}

double sup_norm(const Eigen::VectorXcd& u) { return u.size() == 0 ? 0.0 : u.cwiseAbs().maxCoeff(); }

MinimizerResult minimize_J(const EffectiveProblem& problem, const Eigen::VectorXcd& initial,
                           const MinimizeOptions& options) {
  require(initial.size() == problem.size(), "minimize_J: initial state does not match mesh");
  require(options.tol > 0.0 && options.max_iterations > 0, "minimize_J: invalid options");

  using Sparse = halfplane::SparseMatrix;
  const Sparse& K = problem.op->K;
  const Eigen::VectorXd& m = problem.op->mass;
  const double b = problem.b;
  Sparse P = b * K;
  for (Eigen::Index k = 0; k < P.rows(); ++k) P.coeffRef(k, k) += m[k];
  Eigen::SimplicialLLT<Sparse, Eigen::Lower> precond(P);
  if (precond.info() != Eigen::Success) throw Error("minimize_J: preconditioner factorization failed");

  auto gradient = [&](const Eigen::VectorXcd& u, const Eigen::VectorXcd& Ku) {
    Eigen::VectorXcd g = b * Ku;
    for (Eigen::Index k = 0; k < u.size(); ++k) g[k] += m[k] * (std::norm(u[k]) - 1.0) * u[k];
    return g;
  };
  // J(u + s) - J(u) from small quantities only, so that descent can be
  // verified long after the energy itself has stopped changing in its
  // leading digits.
  auto increment = [&](const Eigen::VectorXcd& u, const Eigen::VectorXcd& Ku, const Eigen::VectorXcd& s,
                       const Eigen::VectorXcd& Ks) {
    double d = b * (2.0 * s.dot(Ku).real() + s.dot(Ks).real());
    for (Eigen::Index k = 0; k < u.size(); ++k) {
      const double before = std::norm(u[k]);
      const double change = 2.0 * (std::conj(u[k]) * s[k]).real() + std::norm(s[k]);
      d += m[k] * (-change + 0.5 * change * (2.0 * before + change));
    }
    return d;
  };

  MinimizerResult out;
  Eigen::VectorXcd u = initial;
  Eigen::VectorXcd Ku = K * u;
  Eigen::VectorXcd g = gradient(u, Ku);
  Eigen::VectorXcd pg = precond.solve(g);
  double gp = std::max(0.0, g.dot(pg).real());
  double energy = evaluate(u, problem, false).value.energy;
  out.trace.push_back(energy);

  double tau = 1.0;
  int it = 0;
  for (; it < options.max_iterations; ++it) {
    if (std::sqrt(gp) <= options.tol) break;
    const Eigen::VectorXcd Kp = K * pg;
    Eigen::VectorXcd s, Ks;
    double delta = 0.0;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      s = -tau * pg;
      Ks = -tau * Kp;
      delta = increment(u, Ku, s, Ks);
      if (delta <= -options.armijo * tau * gp) {
        accepted = true;
        break;
      }
      tau *= 0.5;
    }
    if (!accepted) break;

    u += s;
    Ku += Ks;
    const Eigen::VectorXcd g_next = gradient(u, Ku);
    const double sy = s.dot(g_next - g).real();
    const double ss = tau * tau * gp;  // <s, P s> with s = -tau P^-1 g
    g = g_next;
    pg = precond.solve(g);
    gp = std::max(0.0, g.dot(pg).real());
    energy += delta;
    out.trace.push_back(energy);
    tau = sy > 0.0 ? std::clamp(ss / sy, 1e-6, 1e6) : std::min(2.0 * tau, 1e6);

    const int n = static_cast<int>(out.trace.size());
    if (n > options.stall_window) {
      const double before = out.trace[n - 1 - options.stall_window];
      if (std::abs(before - energy) <= options.stall_rel * std::abs(energy)) {
        ++it;
        break;
      }
    }
  }
  const Evaluation final_value = evaluate(u, problem, false);
  out.state = std::move(u);
  out.energy = final_value.value.energy;
  out.breakdown = final_value.value.breakdown;
  out.iterations = it;
  out.grad_norm = std::sqrt(gp);
  out.converged = out.grad_norm <= options.tol;
  out.trivial = out.energy > -options.zero_tol;
  return out;
}

Eigen::VectorXcd scaled_seed(const EffectiveProblem& problem, const Eigen::VectorXcd& phi) {
  require(phi.size() == problem.size(), "scaled_seed: field does not match mesh");
  const Eigen::VectorXd& m = problem.op->mass;
  const double q = phi.dot(problem.op->K * phi).real();
  double n2 = 0.0, n4 = 0.0;
  for (Eigen::Index k = 0; k < phi.size(); ++k) {
    const double s = std::norm(phi[k]);
    n2 += m[k] * s;
    n4 += m[k] * s * s;
  }
  const double s2 = (n2 - problem.b * q) / n4;
  if (!(s2 > 0.0)) return Eigen::VectorXcd::Zero(phi.size());
  return std::sqrt(s2) * phi;
}

MinimizerResult minimize_J(const EffectiveProblem& problem, const MinimizeOptions& options) {
  const halfplane::EigenPair ground = halfplane::lowest_eigenpair(*problem.op);
  return minimize_J(problem, scaled_seed(problem, ground.vector), options);
}

Eigen::VectorXcd random_seed(const HalfDiskMesh& mesh, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  constexpr int kBumps = 6;
  const double spread = mesh.R / 3.0;
  std::vector<Vec2> centers;
  std::vector<Complex> weights;
  for (int k = 0; k < kBumps; ++k) {
    const double r = spread * std::sqrt(unit(engine));
    const double t = kPi * unit(engine);
    centers.push_back({r * std::cos(t), r * std::sin(t)});
    weights.emplace_back(2.0 * unit(engine) - 1.0, 2.0 * unit(engine) - 1.0);
  }
  Eigen::VectorXcd u(mesh.size());
  for (int i = 0; i < mesh.size(); ++i) {
    Complex v = 0.0;
    for (int k = 0; k < kBumps; ++k) {
      const Vec2 d = mesh.nodes[i] - centers[k];
      v += weights[k] * std::exp(-dot(d, d) / 4.5);
    }
    u[i] = v;
  }
  const double top = sup_norm(u);
  if (top > 0.0) u *= 0.8 / top;
  return u;
}

EnergyCurve energy_curve(const halfplane::WedgeParams& wedge, const std::vector<double>& b_grid,
                         std::shared_ptr<const HalfDiskMesh> mesh, const MinimizeOptions& options) {
  require(!b_grid.empty(), "energy_curve: empty b grid");
  require(std::is_sorted(b_grid.begin(), b_grid.end()) &&
              std::adjacent_find(b_grid.begin(), b_grid.end()) == b_grid.end(),
          "energy_curve: b grid must be strictly increasing");
  const EffectiveProblem base = make_effective_problem(b_grid.front(), wedge, std::move(mesh));
  const halfplane::EigenPair ground = halfplane::lowest_eigenpair(*base.op);

  EnergyCurve curve;
  curve.mu = ground.value;
  Eigen::VectorXcd previous;
  for (double b : b_grid) {
    const EffectiveProblem p = base.with_b(b);
    Eigen::VectorXcd seed = scaled_seed(p, ground.vector);
    if (previous.size() == seed.size() && evaluate_J(previous, p).energy < evaluate_J(seed, p).energy) seed = previous;
    MinimizerResult r = minimize_J(p, seed, options);
    curve.b_values.push_back(b);
    curve.E_values.push_back(r.energy);
    curve.iterations.push_back(r.iterations);
    curve.converged.push_back(r.converged);
    curve.sup_norm.push_back(sup_norm(r.state));
    curve.all_converged = curve.all_converged && r.converged;
    previous = std::move(r.state);
  }

  std::vector<std::size_t> nontrivial;
  for (std::size_t k = 0; k < curve.E_values.size(); ++k)
    if (curve.E_values[k] < -options.zero_tol) nontrivial.push_back(k);
  curve.threshold_estimate = std::numeric_limits<double>::quiet_NaN();
  if (nontrivial.size() >= 2) {
    const std::size_t i1 = nontrivial[nontrivial.size() - 2], i2 = nontrivial.back();
    const double s1 = std::sqrt(-curve.E_values[i1]), s2 = std::sqrt(-curve.E_values[i2]);
    const double b1 = curve.b_values[i1], b2 = curve.b_values[i2];
    if (s1 > s2) curve.threshold_estimate = b2 + s2 * (b2 - b1) / (s1 - s2);
  }
  if (std::isnan(curve.threshold_estimate)) {
    for (std::size_t k = 0; k < curve.E_values.size(); ++k)
      if (curve.E_values[k] >= -options.zero_tol) {
        curve.threshold_estimate = curve.b_values[k];
        break;
      }
  }
  return curve;
}

DecayFit decay_fit(const MinimizerResult& result, const EffectiveProblem& problem) {
  require(result.state.size() == problem.size(), "decay_fit: state does not match mesh");
  if (result.trivial) throw Error("decay_fit: trivial minimizer, no decay to fit");
  const HalfDiskMesh& mesh = *problem.mesh;
  const std::vector<double> rings = halfplane::ring_maxima(mesh, result.state);
  std::vector<double> r, y;
  for (int i = 1; i <= mesh.n_rings; ++i) {
    const double radius = mesh.radius(i);
    if (radius < 0.25 * mesh.R || radius > 0.75 * mesh.R) continue;
    if (!(rings[i] > 0.0)) continue;
    r.push_back(radius);
    y.push_back(std::log(rings[i]));
  }
  require(r.size() >= 3, "decay_fit: too few rings in the fit window");
  const double n = static_cast<double>(r.size());
  double mr = 0.0, my = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    mr += r[k] / n;
    my += y[k] / n;
  }
  double srr = 0.0, sry = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    srr += (r[k] - mr) * (r[k] - mr);
    sry += (r[k] - mr) * (y[k] - my);
    syy += (y[k] - my) * (y[k] - my);
  }
  DecayFit fit;
  fit.delta = -sry / srr;
  fit.quality = syy > 0.0 ? sry * sry / (srr * syy) : 0.0;
  fit.samples = static_cast<int>(r.size());
  return fit;
}

LocalizationCheck localization_check(const EffectiveProblem& problem, const Eigen::VectorXcd& u, double width) {
  require(u.size() == problem.size(), "localization_check: field does not match mesh");
  require(width > 0.0, "localization_check: width must be positive");
  const HalfDiskMesh& mesh = *problem.mesh;
  const double alpha = problem.wedge.alpha;
  auto edge_free = [&](Vec2 x) { return smooth_step(distance_to_edge(alpha, x) / width); };
  auto bulk = [&](Vec2 x) { return edge_free(x) * smooth_step(x.y / width); };

  auto quotient = [&](auto&& chi, double& ims) {
    Eigen::VectorXcd v(u.size());
    double norm2 = 0.0, grad2 = 0.0;
    const double d = 1e-6;
    for (int k = 0; k < mesh.size(); ++k) {
      const Vec2 x = mesh.nodes[k];
      const double c = chi(x);
      v[k] = c * u[k];
      norm2 += mesh.mass[k] * c * c * std::norm(u[k]);
      const double gx = (chi(Vec2{x.x + d, x.y}) - chi(Vec2{x.x - d, x.y})) / (2 * d);
      const double gy = (chi(Vec2{x.x, x.y + d}) - chi(Vec2{x.x, std::max(0.0, x.y - d)})) / (x.y > d ? 2 * d : d);
      grad2 += mesh.mass[k] * (gx * gx + gy * gy) * std::norm(u[k]);
    }
    require(norm2 > 0.0, "localization_check: cutoff annihilates the state");
    ims = grad2 / norm2;
    return v.dot(problem.op->K * v).real() / norm2;
  };
  LocalizationCheck out;
  out.bulk_quotient = quotient(bulk, out.bulk_ims);
  out.edge_free_quotient = quotient(edge_free, out.edge_free_ims);
  return out;
}

}  // namespace stepgl::effective
