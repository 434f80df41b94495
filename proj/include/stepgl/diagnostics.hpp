#pragma once

// Measurements on GL minimizers: local energies, L4 concentration near the
// chord endpoints, decay away from them, and the critical-field ladder.

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "stepgl/gldomain.hpp"

namespace stepgl::diag {

using NodeMask = std::vector<unsigned char>;

struct LocalEnergy {
  double E0 = 0.0;  // kinetic - quadratic + quartic over the region
  double E = 0.0;   // E0 + kappa^2 H^2 ||curl(A - F)||^2 over the whole disk
};

LocalEnergy local_energy(const gl::GLState& state, const gl::GLProblem& problem, const NodeMask& region);

// kappa^2 H^2 ||curl(A - F)||^2.
double field_term(const gl::GLState& state, const gl::GLProblem& problem);

struct Neighborhood {
  Vec2 center;
  double ell = 0.0;
  NodeMask mask;  // dist(x, center) <= ell
};

// Neighborhoods of both chord endpoints; throws if they would overlap.
std::vector<Neighborhood> neighborhoods(const gl::GLProblem& problem, double ell);

constexpr double kEllExponent = 0.85;

// c with c kappa^-0.85 sqrt(kappa^2 b) = 8 at (kappa_min, b_min).
double ell_constant(double kappa_min, double b_min);
double ell_for(double kappa, double constant);

struct PointConcentration {
  double l4_mass = 0.0;  // kappa^2 int_{N_j} |psi|^4
  double E_eff = 0.0;
  double mismatch_2E = 0.0;         // |l4_mass + 2 E_eff|
  double mismatch_2E_over_b = 0.0;  // |l4_mass + 2 E_eff / b|
};

struct ConcentrationReport {
  double ell = 0.0;
  double b = 0.0;
  std::vector<PointConcentration> points;
  double total_l4 = 0.0;           // kappa^2 int_Omega |psi|^4
  double fraction_inside = 0.0;    // share of total_l4 inside the union of neighborhoods
  double E_gst = 0.0;
  double sum_E = 0.0;
  double sum_E_over_b = 0.0;
  double global_mismatch = 0.0;         // |E_gst - sum_E|
  double global_mismatch_over_b = 0.0;  // |E_gst - sum_E / b|
  double field_term = 0.0;
};

ConcentrationReport concentration_report(const gl::GLState& state, const gl::GLProblem& problem, double ell,
                                         const std::vector<double>& eff_energies);

enum class DecayStatus { Fitted, Normal, TooFewShells };

struct DecayProfile {
  double ell = 0.0;
  double weighted_mass = 0.0;  // int_{dist >= ell} |psi|^2 + |(grad - i kappa H A) psi|^2 / (kappa H)
  double fitted_rate = 0.0;    // -d log max|psi| / d (sqrt(kappa H) dist)
  double fit_quality = 0.0;    // R^2
  int shells = 0;
  DecayStatus status = DecayStatus::Normal;
};

struct DecayOptions {
  int shells = 20;
  double outer_factor = 2.0;     // shells span [ell, outer_factor * ell]
  double normal_sup = 1e-3;      // below this sup |psi| the fit is skipped
  double noise_floor = 1e-7;     // shell maxima below noise_floor * sup |psi| are dropped
};

double weighted_mass(const gl::GLState& state, const gl::GLProblem& problem, const std::vector<Vec2>& S, double ell);

DecayProfile decay_profile(const gl::GLState& state, const gl::GLProblem& problem, const std::vector<Vec2>& S,
                           double ell, const DecayOptions& options = {});

std::string to_string(DecayStatus s);

struct CriticalFieldReport {
  double kappa = 0.0;
  double a = 0.0;
  double H_C2 = 0.0;   // kappa / |a|
  double H_int = 0.0;  // kappa / (|a| Theta0)
  std::vector<double> H;             // kappa / mu_j, sorted, admissible points only
  std::vector<int> H_points;         // point index of each H entry
  std::vector<int> omitted;          // points with mu_j >= |a| Theta0
  std::vector<double> mu;

  bool ordered() const;              // H_C2 < H_int < H_1 <= ... <= H_n
  std::vector<int> active_set(double b) const;  // {j : mu_j < 1 / b}
};

CriticalFieldReport critical_fields(double a, double kappa, const std::vector<double>& mu_values);

enum class Regime { Normal, Partial, NearAllPoints };
std::string to_string(Regime r);

struct PhaseRow {
  double kappa = 0.0;
  double b = 0.0;
  std::vector<int> T;
  std::vector<double> mass;  // per point, kappa^2 int_{N_j} |psi|^4
  double E_gst = 0.0;
  double sup_psi = 0.0;
  bool converged = false;
  std::string status = "ok";  // "ok" or the error message of a failed cell
  Regime regime = Regime::Normal;
};

struct PhaseOptions {
  double mesh_resolution = 0.2;
  double ell_constant = 0.0;       // 0: ell_constant(min kappa, min b)
  double regime_threshold = 1e-3;  // relative to the table-wide maximum mass
  gl::GLOptions gl;
};

// One GL solve per (kappa, b) cell; failed cells keep their row with the
// error in `status`.
std::vector<PhaseRow> phase_diagram(const gl::StepFieldGeometry& geometry, const std::vector<double>& kappa_grid,
                                    const std::vector<double>& b_grid, const std::vector<double>& mu_values,
                                    const PhaseOptions& options = {});

// Regime labels from the masses relative to the largest mass in the table.
void label_regimes(std::vector<PhaseRow>& rows, double threshold);

}  // namespace stepgl::diag
