#pragma once

// Full Ginzburg-Landau functional
//   E(psi, A) = int |(grad - i kappa H A) psi|^2 - kappa^2 |psi|^2 + kappa^2 / 2 |psi|^4
//             + kappa^2 H^2 int |curl A - B0|^2
// on a disk cut by a straight chord, with B0 = 1 above the chord and a below.
//
// Discretization: polar finite volumes. psi lives on nodes, A on links as
// line integrals a_e = int_e A.dl, and curl A on faces as circulation / area.
// The chord endpoints sit on angular lines, and the diameter (offset 0)
// coincides with two radial lines.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "stepgl/common.hpp"
#include "stepgl/halfplane.hpp"

namespace stepgl::gl {

struct StepFieldGeometry {
  double rho = 1.0;
  double chord_offset = 0.0;  // chord x2 = chord_offset; Omega_1 = {x2 > offset}
  double a = -1.0;
  bool validation = false;    // a = 1 accepted
  std::array<Vec2, 2> points;        // p_1 (right end), p_2 (left end)
  std::array<double, 2> point_angles;  // polar angles of p_j
  std::array<double, 2> alpha;       // edge-boundary angle at p_j toward Omega_1

  // B0 at x, with the chord itself assigned to Omega_1.
  double field_at(Vec2 x) const;
  bool in_omega1(Vec2 x) const { return x.y >= chord_offset; }
};

StepFieldGeometry build_geometry(double rho, double chord_offset, double a, bool validation = false);

struct DiskMeshOptions {
  double boundary_spacing = 0.01;  // arc spacing on the circle near p_j
  double far_spacing = 0.02;       // arc spacing on the circle away from p_j
  double fine_width = 0.2;         // arc length on each side of p_j kept at boundary_spacing
  double radial_spacing = 0.01;    // ring spacing next to the circle
  double fine_depth = 0.1;         // depth kept at radial_spacing
  double growth = 1.06;            // ratio between neighbouring spacings outside the fine zones
  double max_radial_spacing = 0.05;

  // Spacings in units of the magnetic length 1 / sqrt(kappa H), H = b kappa.
  static DiskMeshOptions adapted(const StepFieldGeometry& geometry, double kappa, double b,
                                 double resolution = 0.2);
  static DiskMeshOptions uniform(double spacing);
};

struct DiskLink {
  int from = 0;
  int to = 0;
  double length = 0.0;       // primal length (arc length for angular links)
  double dual_length = 0.0;  // length of the dual edge crossing it
  double weight = 0.0;       // dual_length / length
  int left = -1;             // face on the left of from -> to, -1 outside the disk
  int right = -1;
};

struct DiskMesh {
  double rho = 1.0;
  std::vector<double> radii;   // radii[0] = 0, radii.back() = rho
  std::vector<double> theta;   // angular lines, increasing, theta[0] = angle of p_1
  std::vector<double> dtheta;  // dtheta[j] = theta[j + 1] - theta[j] (cyclic)
  std::array<int, 2> point_lines{0, 0};

  // Node 0 is the centre; ring i >= 1, line j is node 1 + (i - 1) * n_lines() + j.
  std::vector<Vec2> nodes;
  std::vector<double> mass;
  std::vector<unsigned char> on_boundary;
  std::vector<DiskLink> links;
  // Face between rings i and i + 1 (i = 0: triangles at the centre) and lines
  // j, j + 1 is face i * n_lines() + j.
  std::vector<double> face_area;

  int n_rings() const { return static_cast<int>(radii.size()) - 1; }
  int n_lines() const { return static_cast<int>(theta.size()); }
  int size() const { return static_cast<int>(nodes.size()); }
  int n_faces() const { return static_cast<int>(face_area.size()); }
  int node(int ring, int line) const { return ring == 0 ? 0 : 1 + (ring - 1) * n_lines() + line; }
  int face(int gap, int line) const { return gap * n_lines() + line; }
};

DiskMesh make_disk_mesh(const StepFieldGeometry& geometry, const DiskMeshOptions& options);

// Face averages of B0 and the constant int |B0 - average|^2 over cut faces.
struct FaceField {
  Eigen::VectorXd average;
  double cut_constant = 0.0;
};

FaceField face_field(const StepFieldGeometry& geometry, const DiskMesh& mesh);

struct FieldF {
  Eigen::VectorXd links;  // a_e = int_e F.dl
  Eigen::VectorXd phi;    // stream function on faces, zero outside the disk
  double curl_residual = 0.0;   // || curl F - B0 ||_{L2}
  double max_divergence = 0.0;  // max over nodes of |net flux| / mass
};

// F = grad-perp phi with the face Laplacian of phi equal to B0 and phi = 0
// on the circle. Flux differences of phi make the discrete divergence vanish
// identically and F.nu = 0 on the circle.
FieldF compute_F(const StepFieldGeometry& geometry, const DiskMesh& mesh);

struct GLBreakdown {
  double kinetic = 0.0;
  double quadratic = 0.0;  // kappa^2 int |psi|^2
  double quartic = 0.0;    // kappa^2 / 2 int |psi|^4
  double field = 0.0;      // kappa^2 H^2 int |curl A - B0|^2
  double total() const { return kinetic - quadratic + quartic + field; }
};

struct GLEnergy {
  double energy = 0.0;
  GLBreakdown breakdown;
};

struct GLState {
  Eigen::VectorXcd psi;
  Eigen::VectorXd A;  // link line integrals
  double kappa = 0.0;
  double H = 0.0;
  double energy = 0.0;
  GLBreakdown breakdown;
};

struct GLFactorizations;

// Everything that depends on (geometry, mesh, kappa, b) but not on the state.
struct GLProblem {
  StepFieldGeometry geometry;
  std::shared_ptr<const DiskMesh> mesh;
  double kappa = 0.0;
  double b = 0.0;
  double H = 0.0;
  FieldF F;
  FaceField B0;
  std::shared_ptr<const GLFactorizations> factors;
};

GLProblem make_gl_problem(const StepFieldGeometry& geometry, std::shared_ptr<const DiskMesh> mesh, double kappa,
                          double b);

GLEnergy evaluate_GL(const GLState& state, const GLProblem& problem);
GLEnergy evaluate_GL(const GLState& state, const StepFieldGeometry& geometry, const DiskMesh& mesh);

// Normal state psi = 0, A = F.
GLState normal_state(const GLProblem& problem);

enum class Seed { Transplant, Constant, Random };

struct GLOptions {
  // Stop when both dual gradient norms are below tol: sqrt(g^* P^-1 g) with
  // P = K_F + kappa^2 M for psi and the field Hessian for A.
  double tol = 1e-7;
  int max_sweeps = 200;
  int inner_iterations = 400;
  int memory = 8;  // L-BFGS pairs in the psi phase
  double armijo = 1e-4;
  int cg_iterations = 60;
  double cg_rel_tol = 1e-6;
  int stall_window = 50;
  double stall_rel = 1e-12;
  Seed seed = Seed::Transplant;
  std::uint64_t random_seed = 1;
  double constant_value = 0.5;
  // Half-disk used for the transplanted effective minimizers.
  double effective_R = 15.0;
  double effective_h = 0.15;
};

struct GLResult {
  GLState state;
  GLState initial;
  int sweeps = 0;
  int iterations = 0;  // accepted psi steps
  double psi_gradient = 0.0;
  double A_gradient = 0.0;
  bool converged = false;
  std::vector<double> trace;  // energy after every accepted step
  std::vector<std::string> warnings;
};

// Alternating descent from the given state: preconditioned L-BFGS steps in
// psi at fixed A, then a Gauss-Newton step in A = F + curl-perp q
// solved by preconditioned conjugate gradients.
GLResult minimize_GL(const GLProblem& problem, const GLState& initial, const GLOptions& options = {});
GLResult minimize_GL(const GLProblem& problem, const GLOptions& options = {});
GLResult minimize_GL(const StepFieldGeometry& geometry, double kappa, double b, std::shared_ptr<const DiskMesh> mesh,
                     const GLOptions& options = {});

// Sum over j of the effective half-plane minimizer at (alpha_j, a, b),
// rescaled by sqrt(kappa H), rotated into the frame at p_j and gauge
// matched to F. Falls back to the scaled linear ground state when the
// effective minimizer is trivial.
Eigen::VectorXcd transplant_seed(const GLProblem& problem, const GLOptions& options = {},
                                 std::vector<std::string>* warnings = nullptr);

struct GLResidual {
  double psi_residual = 0.0;  // dual norm of the psi gradient
  double A_residual = 0.0;    // dual norm of the A gradient within F + curl-perp q
  double bc_residual = 0.0;   // same norms restricted to boundary nodes and boundary faces
};

GLResidual gl_residual(const GLState& state, const GLProblem& problem);

struct AprioriReport {
  double sup_psi = 0.0;
  double kinetic_ratio = 0.0;  // ||(grad - i kappa H A) psi|| / (kappa ||psi||)
  double field_ratio = 0.0;    // H ||curl(A - F)|| / ||psi||^2
  bool sup_ok = false;         // sup |psi| <= 1 + 1e-3
};

AprioriReport apriori_check(const GLState& state, const GLProblem& problem);

// Lowest eigenvalue of the linearized operator -(grad - i kappa H F)^2
// divided by kappa H; its reciprocal is the finite-kappa threshold in b.
// `shift` is in the same units and must lie below the result.
double linear_threshold(const GLProblem& problem, double shift = 0.0);

// Nodal Cartesian A from the link integrals (least squares per node).
std::vector<Vec2> nodal_vector_potential(const DiskMesh& mesh, const Eigen::VectorXd& links);

// Circulation / area of a link field on every face.
Eigen::VectorXd face_curl(const DiskMesh& mesh, const Eigen::VectorXd& links);

// Kinetic energy attributed to nodes, half of each link term to each end.
Eigen::VectorXd node_kinetic_energy(const GLState& state, const DiskMesh& mesh);

}  // namespace stepgl::gl
