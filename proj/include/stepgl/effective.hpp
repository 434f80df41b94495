#pragma once

// Effective half-plane functional
//   J(u) = int b |(grad - iA)u|^2 - |u|^2 + |u|^4 / 2
// on the truncated half-disk mesh, its minimization and the energy curve
// E(b) = inf J.

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <vector>

#include "stepgl/halfplane.hpp"

namespace stepgl::effective {

struct EffectiveProblem {
  double b = 0.0;
  halfplane::WedgeParams wedge;
  std::shared_ptr<const halfplane::HalfDiskMesh> mesh;
  std::shared_ptr<const halfplane::MagneticOperator> op;

  EffectiveProblem with_b(double new_b) const;
  int size() const { return mesh->size(); }
};

// Requires b > 1 / (|a| Theta0).
EffectiveProblem make_effective_problem(double b, const halfplane::WedgeParams& wedge,
                                        std::shared_ptr<const halfplane::HalfDiskMesh> mesh);

struct EnergyBreakdown {
  double kinetic = 0.0;    // b * sum_e w_e |u_to - e^{i phi} u_from|^2
  double quadratic = 0.0;  // sum_k m_k |u_k|^2
  double quartic = 0.0;    // sum_k m_k |u_k|^4 / 2
  double total() const { return kinetic - quadratic + quartic; }
};

struct JValue {
  double energy = 0.0;
  EnergyBreakdown breakdown;
};

JValue evaluate_J(const Eigen::VectorXcd& u, const EffectiveProblem& problem);

// g with dJ[v] = 2 Re <g, v> (Euclidean, nodal).
Eigen::VectorXcd gradient_J(const Eigen::VectorXcd& u, const EffectiveProblem& problem);

struct MinimizeOptions {
  int max_iterations = 20000;
  // Stop when sqrt(<g, P^-1 g>) <= tol with P = b K + M.
  double tol = 1e-8;
  double armijo = 1e-4;
  // Also stop when the energy moved by less than stall_rel * |E| over stall_window steps.
  int stall_window = 50;
  double stall_rel = 1e-12;
  // Energies above -zero_tol count as the trivial state.
  double zero_tol = 1e-8;
};

struct MinimizerResult {
  Eigen::VectorXcd state;
  double energy = 0.0;
  EnergyBreakdown breakdown;
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
  bool trivial = false;
  std::vector<double> trace;  // energy after every accepted step, trace[0] = initial
};

// Preconditioned Barzilai-Borwein descent with Armijo backtracking.
MinimizerResult minimize_J(const EffectiveProblem& problem, const Eigen::VectorXcd& initial,
                           const MinimizeOptions& options = {});

// Starts from the scaled ground state of the linear operator.
MinimizerResult minimize_J(const EffectiveProblem& problem, const MinimizeOptions& options = {});

// s * phi with s^2 = (|phi|^2 - b Q(phi)) / int |phi|^4, or 0 when that is
// not positive; the minimum of J along the ray through phi.
Eigen::VectorXcd scaled_seed(const EffectiveProblem& problem, const Eigen::VectorXcd& phi);

// Smooth random field: a few Gaussian bumps with random complex weights
// inside radius R / 3.
Eigen::VectorXcd random_seed(const halfplane::HalfDiskMesh& mesh, std::uint64_t seed);

struct EnergyCurve {
  std::vector<double> b_values;
  std::vector<double> E_values;
  std::vector<int> iterations;
  std::vector<unsigned char> converged;
  std::vector<double> sup_norm;
  // Linear extrapolation of sqrt(-E) to zero from the last two nontrivial
  // points; falls back to the first trivial b when fewer are available.
  double threshold_estimate = 0.0;
  double mu = 0.0;  // discrete spectral bottom on the same mesh
  bool all_converged = true;
};

// b_grid must be increasing; each point is warm-started from the better of
// the previous minimizer and the scaled ground state.
EnergyCurve energy_curve(const halfplane::WedgeParams& wedge, const std::vector<double>& b_grid,
                         std::shared_ptr<const halfplane::HalfDiskMesh> mesh, const MinimizeOptions& options = {});

struct DecayFit {
  double delta = 0.0;
  double quality = 0.0;  // R^2 of the log-linear fit
  int samples = 0;
};

// Least-squares fit of log max_{|x| = r} |u| = c - delta r on r in [R/4, 3R/4].
// Throws if the result is the trivial state.
DecayFit decay_fit(const MinimizerResult& result, const EffectiveProblem& problem);

struct LocalizationCheck {
  double bulk_quotient = 0.0;      // cutoff vanishing near the edge and the boundary
  double edge_free_quotient = 0.0; // cutoff vanishing near the edge only
  double bulk_ims = 0.0;           // sum m |grad chi|^2 |u|^2 / |chi u|^2
  double edge_free_ims = 0.0;
};

// Rayleigh quotients Q(chi u) / |chi u|^2 for smooth cutoffs of width `width`.
LocalizationCheck localization_check(const EffectiveProblem& problem, const Eigen::VectorXcd& u, double width);

double sup_norm(const Eigen::VectorXcd& u);

}  // namespace stepgl::effective
