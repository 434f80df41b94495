#include "stepgl/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "stepgl/spectral1d.hpp"

namespace stepgl::diag {

namespace {

void require_state(const gl::GLState& state, const gl::GLProblem& problem, const char* who) {
  require(problem.mesh != nullptr, std::string(who) + ": problem has no mesh");
  require(state.psi.size() == problem.mesh->size() &&
              state.A.size() == static_cast<Eigen::Index>(problem.mesh->links.size()),
          std::string(who) + ": state does not match mesh");
}

double distance_to(const std::vector<Vec2>& S, Vec2 x) {
  double d = std::numeric_limits<double>::infinity();
  for (const Vec2& p : S) d = std::min(d, norm(x - p));
  return d;
}

}  // namespace

double field_term(const gl::GLState& state, const gl::GLProblem& problem) {
  require_state(state, problem, "field_term");
  const gl::DiskMesh& mesh = *problem.mesh;
  const Eigen::VectorXd curl = gl::face_curl(mesh, state.A - problem.F.links);
  double s = 0.0;
  for (int f = 0; f < mesh.n_faces(); ++f) s += mesh.face_area[f] * curl[f] * curl[f];
  return problem.kappa * problem.kappa * problem.H * problem.H * s;
}

LocalEnergy local_energy(const gl::GLState& state, const gl::GLProblem& problem, const NodeMask& region) {
  require_state(state, problem, "local_energy");
  const gl::DiskMesh& mesh = *problem.mesh;
  require(region.size() == static_cast<std::size_t>(mesh.size()), "local_energy: region does not match mesh");
  const Eigen::VectorXd kin = gl::node_kinetic_energy(state, mesh);
  const double k2 = problem.kappa * problem.kappa;
  LocalEnergy out;
  for (int n = 0; n < mesh.size(); ++n) {
    if (!region[n]) continue;
    const double s = std::norm(state.psi[n]);
    out.E0 += kin[n] + k2 * mesh.mass[n] * (0.5 * s * s - s);
  }
  out.E = out.E0 + field_term(state, problem);
  return out;
}

std::vector<Neighborhood> neighborhoods(const gl::GLProblem& problem, double ell) {
  require(ell > 0.0, "neighborhoods: ell must be positive");
  const auto& pts = problem.geometry.points;
  require(ell <= 0.5 * norm(pts[0] - pts[1]), "neighborhoods: ell exceeds half the distance between the points");
  const gl::DiskMesh& mesh = *problem.mesh;
  std::vector<Neighborhood> out;
  for (const Vec2& p : pts) {
    Neighborhood n{p, ell, NodeMask(mesh.size(), 0)};
    for (int k = 0; k < mesh.size(); ++k) n.mask[k] = norm(mesh.nodes[k] - p) <= ell;
    out.push_back(std::move(n));
  }
  return out;
}

double ell_constant(double kappa_min, double b_min) {
  require(kappa_min > 0.0 && b_min > 0.0, "ell_constant: kappa and b must be positive");
  return 8.0 / (std::sqrt(b_min) * std::pow(kappa_min, 1.0 - kEllExponent));
}

double ell_for(double kappa, double constant) { return constant * std::pow(kappa, -kEllExponent); }

ConcentrationReport concentration_report(const gl::GLState& state, const gl::GLProblem& problem, double ell,
                                         const std::vector<double>& eff_energies) {
  require_state(state, problem, "concentration_report");
  require(eff_energies.size() == 2, "concentration_report: one effective energy per point is required");
  const gl::DiskMesh& mesh = *problem.mesh;
  const auto hoods = neighborhoods(problem, ell);
  const double k2 = problem.kappa * problem.kappa, b = problem.b;
  ConcentrationReport r;
  r.ell = ell;
  r.b = b;
  double inside = 0.0;
  r.points.resize(2);
  for (int n = 0; n < mesh.size(); ++n) {
    const double v = k2 * mesh.mass[n] * std::pow(std::norm(state.psi[n]), 2);
    r.total_l4 += v;
    bool in_any = false;
    for (int j = 0; j < 2; ++j)
      if (hoods[j].mask[n]) {
        r.points[j].l4_mass += v;
        in_any = true;
      }
    if (in_any) inside += v;
  }
  r.fraction_inside = r.total_l4 > 0.0 ? inside / r.total_l4 : 1.0;
  for (int j = 0; j < 2; ++j) {
    PointConcentration& p = r.points[j];
    p.E_eff = eff_energies[j];
    p.mismatch_2E = std::abs(p.l4_mass + 2.0 * p.E_eff);
    p.mismatch_2E_over_b = std::abs(p.l4_mass + 2.0 * p.E_eff / b);
    r.sum_E += p.E_eff;
  }
  r.sum_E_over_b = r.sum_E / b;
  r.E_gst = state.energy;
  r.global_mismatch = std::abs(r.E_gst - r.sum_E);
  r.global_mismatch_over_b = std::abs(r.E_gst - r.sum_E_over_b);
  r.field_term = field_term(state, problem);
  return r;
}

double weighted_mass(const gl::GLState& state, const gl::GLProblem& problem, const std::vector<Vec2>& S, double ell) {
  require_state(state, problem, "weighted_mass");
  require(!S.empty(), "weighted_mass: the point set is empty");
  const gl::DiskMesh& mesh = *problem.mesh;
  const Eigen::VectorXd kin = gl::node_kinetic_energy(state, mesh);
  const double kh = problem.kappa * problem.H;
  double s = 0.0;
  for (int n = 0; n < mesh.size(); ++n)
    if (distance_to(S, mesh.nodes[n]) >= ell) s += mesh.mass[n] * std::norm(state.psi[n]) + kin[n] / kh;
  return s;
}

DecayProfile decay_profile(const gl::GLState& state, const gl::GLProblem& problem, const std::vector<Vec2>& S,
                           double ell, const DecayOptions& options) {
  require(ell > 0.0 && options.shells >= 3 && options.outer_factor > 1.0, "decay_profile: invalid options");
  DecayProfile out;
  out.ell = ell;
  if (S.empty()) {
    out.status = DecayStatus::Normal;
    return out;
  }
  out.weighted_mass = weighted_mass(state, problem, S, ell);
  const gl::DiskMesh& mesh = *problem.mesh;
  const double sup = state.psi.cwiseAbs().maxCoeff();
  if (sup < options.normal_sup) {
    out.status = DecayStatus::Normal;
    return out;
  }
  const double outer = options.outer_factor * ell;
  const double width = (outer - ell) / options.shells;
  std::vector<double> shell_max(options.shells, 0.0);
  for (int n = 0; n < mesh.size(); ++n) {
    const double d = distance_to(S, mesh.nodes[n]);
    if (d < ell || d >= outer) continue;
    const int k = std::min(options.shells - 1, static_cast<int>((d - ell) / width));
    shell_max[k] = std::max(shell_max[k], std::abs(state.psi[n]));
  }
  const double scale = std::sqrt(problem.kappa * problem.H);
  std::vector<double> x, y;
  for (int k = 0; k < options.shells; ++k)
    if (shell_max[k] > options.noise_floor * sup) {
      x.push_back(scale * (ell + (k + 0.5) * width));
      y.push_back(std::log(shell_max[k]));
    }
  out.shells = static_cast<int>(x.size());
  if (out.shells < 3) {
    out.status = DecayStatus::TooFewShells;
    return out;
  }
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
    syy += (y[k] - my) * (y[k] - my);
  }
  out.fitted_rate = -sxy / sxx;
  out.fit_quality = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  out.status = DecayStatus::Fitted;
  return out;
}

std::string to_string(DecayStatus s) {
  switch (s) {
    case DecayStatus::Fitted: return "fitted";
    case DecayStatus::Normal: return "normal";
    case DecayStatus::TooFewShells: return "too-few-shells";
  }
  return "unknown";
}

bool CriticalFieldReport::ordered() const {
  if (!(H_C2 < H_int)) return false;
  if (!H.empty() && !(H_int < H.front())) return false;
  for (std::size_t k = 1; k < H.size(); ++k)
    if (!(H[k - 1] <= H[k])) return false;
  return true;
}

std::vector<int> CriticalFieldReport::active_set(double b) const {
  require(b > 0.0, "active_set: b must be positive");
  std::vector<int> T;
  for (std::size_t j = 0; j < mu.size(); ++j)
    if (mu[j] * b < 1.0) T.push_back(static_cast<int>(j));
  return T;
}

CriticalFieldReport critical_fields(double a, double kappa, const std::vector<double>& mu_values) {
  require(a >= -1.0 && a < 1.0 && a != 0.0, "critical_fields: a must lie in [-1, 1) without 0");
  require(kappa > 0.0, "critical_fields: kappa must be positive");
  CriticalFieldReport r;
  r.kappa = kappa;
  r.a = a;
  r.mu = mu_values;
  const double floor = std::abs(a) * spectral1d::theta0();
  r.H_C2 = kappa / std::abs(a);
  r.H_int = kappa / floor;
  std::vector<std::pair<double, int>> fields;
  for (std::size_t j = 0; j < mu_values.size(); ++j) {
    require(mu_values[j] > 0.0, "critical_fields: mu must be positive");
    if (mu_values[j] >= floor)
      r.omitted.push_back(static_cast<int>(j));
    else
      fields.emplace_back(kappa / mu_values[j], static_cast<int>(j));
  }
  std::sort(fields.begin(), fields.end());
  for (const auto& [H, j] : fields) {
    r.H.push_back(H);
    r.H_points.push_back(j);
  }
  return r;
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::Normal: return "normal";
    case Regime::Partial: return "partial";
    case Regime::NearAllPoints: return "near-all-points";
  }
  return "unknown";
}

void label_regimes(std::vector<PhaseRow>& rows, double threshold) {
  double reference = 0.0;
  for (const PhaseRow& r : rows)
    for (double m : r.mass) reference = std::max(reference, m);
  for (PhaseRow& r : rows) {
    std::size_t carrying = 0;
    for (double m : r.mass) carrying += reference > 0.0 && m >= threshold * reference;
    r.regime = carrying == 0 ? Regime::Normal : carrying == r.mass.size() ? Regime::NearAllPoints : Regime::Partial;
  }
}

std::vector<PhaseRow> phase_diagram(const gl::StepFieldGeometry& geometry, const std::vector<double>& kappa_grid,
                                    const std::vector<double>& b_grid, const std::vector<double>& mu_values,
                                    const PhaseOptions& options) {
  require(!kappa_grid.empty() && !b_grid.empty(), "phase_diagram: empty grid");
  for (double k : kappa_grid) require(k > 0.0, "phase_diagram: kappa must be positive");
  for (double b : b_grid) require(b > 0.0, "phase_diagram: b must be positive");
  require(mu_values.size() == 2, "phase_diagram: one mu per point is required");
  const double c = options.ell_constant > 0.0
                       ? options.ell_constant
                       : ell_constant(*std::min_element(kappa_grid.begin(), kappa_grid.end()),
                                      *std::min_element(b_grid.begin(), b_grid.end()));
  const CriticalFieldReport ladder = critical_fields(geometry.a, kappa_grid.front(), mu_values);
  std::vector<PhaseRow> rows;
  for (double kappa : kappa_grid)
    for (double b : b_grid) {
      PhaseRow row;
      row.kappa = kappa;
      row.b = b;
      row.T = ladder.active_set(b);
      row.mass.assign(2, 0.0);
      try {
        auto mesh = std::make_shared<const gl::DiskMesh>(
            gl::make_disk_mesh(geometry, gl::DiskMeshOptions::adapted(geometry, kappa, b, options.mesh_resolution)));
        const gl::GLProblem problem = gl::make_gl_problem(geometry, mesh, kappa, b);
        const gl::GLResult result = gl::minimize_GL(problem, options.gl);
        const ConcentrationReport rep = concentration_report(result.state, problem, ell_for(kappa, c), {0.0, 0.0});
        for (int j = 0; j < 2; ++j) row.mass[j] = rep.points[j].l4_mass;
        row.E_gst = result.state.energy;
        row.sup_psi = result.state.psi.cwiseAbs().maxCoeff();
        row.converged = result.converged;
        if (!result.converged) row.status = "not-converged";
      } catch (const std::exception& e) {
        row.status = e.what();
      }
      rows.push_back(std::move(row));
    }
  label_regimes(rows, options.regime_threshold);
  return rows;
}

}  // namespace stepgl::diag
