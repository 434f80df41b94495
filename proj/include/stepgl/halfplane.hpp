#pragma once

// Magnetic Neumann Laplacian -(grad - iA)^2 on a truncated half-plane with
// a step field: curl A = 1 on the sector 0 < theta < alpha and a on
// alpha < theta < pi. Discretized by finite volumes on a polar grid whose
// angular lines include theta = alpha; link phases are exact line integrals.

#include <Eigen/Sparse>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stepgl/common.hpp"

namespace stepgl::halfplane {

struct WedgeParams {
  double alpha = kPi / 2;
  double a = -1.0;
  // Accept a = 1 (uniform field) as an analytic reference case.
  bool validation = false;

  void validate() const;
};

enum class Region : unsigned char { D1, D2 };

struct Edge {
  int from = 0;
  int to = 0;
  double weight = 0.0;  // dual length / primal length
};

// Link from an interior node to a node on the artificial arc (where u = 0).
struct ArcLink {
  int node = 0;
  Vec2 outer;
  double weight = 0.0;
};

struct HalfDiskMesh {
  double R = 0.0;
  double h = 0.0;
  double alpha = kPi / 2;
  double reference_radius = 0.0;
  int n_rings = 0;             // interior rings r_i = i * dr, i = 1..n_rings
  double dr = 0.0;
  std::vector<double> theta;   // angular lines, theta.front() = 0, theta.back() = pi
  int alpha_line = 0;          // theta[alpha_line] == alpha

  // Node 0 is the origin; ring i, line j is node 1 + (i - 1) * n_lines() + j.
  std::vector<Vec2> nodes;
  std::vector<double> mass;
  std::vector<Region> region;
  std::vector<unsigned char> on_boundary;  // x2 = 0
  std::vector<Edge> edges;
  std::vector<ArcLink> arc_links;

  int n_lines() const { return static_cast<int>(theta.size()); }
  int size() const { return static_cast<int>(nodes.size()); }
  int index(int ring, int line) const { return 1 + (ring - 1) * n_lines() + line; }
  double radius(int ring) const { return ring * dr; }
};

// Polar half-disk mesh of radius R. Radial spacing is R / round(R / h); the
// sectors [0, alpha] and [alpha, pi] are split uniformly so that the arc
// spacing at `reference_radius` (default R / 2) is at most h.
HalfDiskMesh make_half_disk_mesh(double R, double h, double alpha,
                                 std::optional<double> reference_radius = std::nullopt);

Region region_of(double alpha, Vec2 x);

// (0, A_{alpha,a}(x)) with the D1 branch on theta = alpha.
Vec2 wedge_potential(const WedgeParams& params, Vec2 x);

using VectorPotential = std::function<Vec2(Vec2)>;

// Line integral of A along the straight segment p -> q (3-point Gauss).
double link_phase(const VectorPotential& A, Vec2 p, Vec2 q);

using SparseMatrix = Eigen::SparseMatrix<Complex>;

struct MagneticOperator {
  SparseMatrix K;           // Hermitian, u^* K u = sum_e w_e |u_to - e^{i phi_e} u_from|^2 + arc terms
  Eigen::VectorXd mass;     // lumped control-volume areas
};

// Quadratic form of `scale * A` on the mesh: natural (magnetic Neumann)
// condition on x2 = 0, Dirichlet on the arc |x| = R.
MagneticOperator assemble_magnetic_laplacian(const VectorPotential& A, const HalfDiskMesh& mesh,
                                             double scale = 1.0);
MagneticOperator assemble_magnetic_laplacian(const WedgeParams& params, const HalfDiskMesh& mesh,
                                             double scale = 1.0);

// u^* K u evaluated edge by edge (no cancellation against the diagonal).
double quadratic_form(const VectorPotential& A, const HalfDiskMesh& mesh, const Eigen::VectorXcd& u,
                      double scale = 1.0);

double l2_norm(const HalfDiskMesh& mesh, const Eigen::VectorXcd& u);

struct EigenOptions {
  double shift = 0.0;
  // Residual ||K u - lambda M u||_{M^-1} with ||u||_M = 1; raised to the
  // roundoff level 100 eps ||M^-1/2 K M^-1/2||_inf on very fine meshes.
  double tol = 1e-9;
  int krylov_dim = 40;
  int max_restarts = 60;
};

struct EigenPair {
  double value = 0.0;
  Eigen::VectorXcd vector;    // M-normalized
  double residual = 0.0;
  int iterations = 0;         // operator applications
};

// Lowest eigenpair of K u = lambda M u by shift-invert Lanczos in the
// M-inner product with full reorthogonalization and explicit restarts.
// The start vector is fixed, so results are reproducible bit for bit.
EigenPair lowest_eigenpair(const MagneticOperator& op, const EigenOptions& options = {});

struct SpectralResult {
  double eigenvalue = 0.0;
  Eigen::VectorXcd eigenvector;
  double residual = 0.0;
  double R = 0.0;
  double h = 0.0;
  int iterations = 0;
  // Set when the eigenvalue is within tolerance of |a| Theta0 or above it.
  bool near_essential_floor = false;
};

struct MuOptions {
  EigenOptions eigen;
  std::optional<double> reference_radius;
  // Tolerance for the near_essential_floor flag.
  double floor_tol = 1e-3;
};

// Requires R >= 15 and h <= R / 100.
SpectralResult compute_mu(const WedgeParams& params, double R, double h, const MuOptions& options = {});

// Same solve on a caller-supplied mesh, without the size preconditions.
SpectralResult compute_mu(const WedgeParams& params, const HalfDiskMesh& mesh, const MuOptions& options = {});

// |a| Theta0 from the cached value; throws if Theta0 has not been computed.
double essential_floor(double a);

enum class BoundStatus { Bound, Inconclusive };

struct BoundStateReport {
  BoundStatus status = BoundStatus::Inconclusive;
  double mu = 0.0;            // value on the finer mesh (h / 2)
  double mu_coarse = 0.0;
  double margin = 0.0;        // |a| Theta0 - mu
  double error_estimate = 0.0;
  bool is_bound() const { return status == BoundStatus::Bound; }
};

// Bound iff margin > 2 * |mu_h - mu_{h/2}|. A Dirichlet truncation only
// bounds mu from above, so a negative margin is reported as inconclusive.
BoundStateReport check_bound_state(const WedgeParams& params, double R, double h, const MuOptions& options = {});

const char* to_string(BoundStatus status);

// max |u| on each ring, index 0 for the origin.
std::vector<double> ring_maxima(const HalfDiskMesh& mesh, const Eigen::VectorXcd& u);

}  // namespace stepgl::halfplane
