#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "stepgl/halfplane.hpp"
#include "stepgl/spectral1d.hpp"

using namespace stepgl;
using namespace stepgl::halfplane;

namespace {

double dense_mu(const WedgeParams& p, const HalfDiskMesh& mesh, double scale = 1.0) {
  std::vector<double> x, y, diag(mesh.size(), 0.0);
  for (const Vec2& v : mesh.nodes) {
    x.push_back(v.x);
    y.push_back(v.y);
  }
  std::vector<oracle::GraphEdge> edges;
  for (const Edge& e : mesh.edges) edges.push_back({e.from, e.to, e.weight});
  for (const ArcLink& l : mesh.arc_links) diag[l.node] += l.weight;
  return oracle::magnetic_graph_dense(x, y, edges, diag, mesh.mass, p.alpha, p.a, scale);
}

double polygon_area(const std::vector<Vec2>& p) {
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const Vec2 a = p[k], b = p[(k + 1) % p.size()];
    s += a.x * b.y - a.y * b.x;
  }
  return 0.5 * s;
}

}  // namespace

// Must run before anything computes Theta0 in this process.
TEST_CASE("essential floor requires Theta0") {
  REQUIRE_FALSE(spectral1d::cached_theta0().has_value());
  CHECK_THROWS_AS(essential_floor(-1.0), Error);
  spectral1d::compute_theta0(1e-6);
  CHECK(essential_floor(-1.0) == doctest::Approx(0.59).epsilon(0.005 / 0.59));
  CHECK(std::abs(essential_floor(0.5) - 0.295) < 0.003);
  CHECK(std::abs(essential_floor(-0.25) - 0.1475) < 0.002);
  CHECK_THROWS_AS(essential_floor(0.0), InvalidArgument);
}

TEST_CASE("wedge potential branches") {
  const WedgeParams right{kPi / 2, -1.0};
  CHECK(wedge_potential(right, {1.0, 3.0}) == Vec2{0.0, 1.0});
  CHECK(wedge_potential(right, {-1.0, 3.0}) == Vec2{0.0, 1.0});
  const WedgeParams acute{kPi / 3, 0.5};
  CHECK(wedge_potential(acute, {2.0, 0.0}) == Vec2{0.0, 2.0});
  CHECK(wedge_potential(acute, {0.7, 0.0}) == Vec2{0.0, 0.7});
  // continuity across theta = alpha for all three cases
  for (double alpha : {kPi / 5, kPi / 2, 3 * kPi / 4}) {
    const WedgeParams p{alpha, -0.5};
    const Vec2 on{2.0 * std::cos(alpha), 2.0 * std::sin(alpha)};
    const Vec2 below{2.0 * std::cos(alpha - 1e-9), 2.0 * std::sin(alpha - 1e-9)};
    const Vec2 above{2.0 * std::cos(alpha + 1e-9), 2.0 * std::sin(alpha + 1e-9)};
    CHECK(std::abs(wedge_potential(p, below).y - wedge_potential(p, above).y) < 1e-8);
    CHECK(region_of(alpha, on) == Region::D1);
  }
}

TEST_CASE("finite-difference curl of the wedge potential") {
  const double d = 1e-3;
  for (double alpha : {kPi / 6, kPi / 3, kPi / 2, 2 * kPi / 3, 5 * kPi / 6})
    for (double a : {-1.0, -0.5, 0.5}) {
      const WedgeParams p{alpha, a};
      auto curl = [&](Vec2 x) {
        return (wedge_potential(p, {x.x + d, x.y}).y - wedge_potential(p, {x.x - d, x.y}).y) / (2 * d) -
               (wedge_potential(p, {x.x, x.y + d}).x - wedge_potential(p, {x.x, x.y - d}).x) / (2 * d);
      };
      const double t1 = 0.5 * alpha, t2 = 0.5 * (alpha + kPi);
      CHECK(curl({3.0 * std::cos(t1), 3.0 * std::sin(t1)}) == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(curl({3.0 * std::cos(t2), 3.0 * std::sin(t2)}) == doctest::Approx(a).epsilon(1e-6));
    }
}

TEST_CASE("link phases around every cell equal the enclosed flux") {
  const WedgeParams p{kPi / 3, -0.5};
  const HalfDiskMesh mesh = make_half_disk_mesh(4.0, 0.25, p.alpha);
  auto A = [&](Vec2 x) { return wedge_potential(p, x); };
  double worst = 0.0;
  for (int i = 1; i < mesh.n_rings; ++i)
    for (int j = 0; j + 1 < mesh.n_lines(); ++j) {
      const std::vector<Vec2> cell{mesh.nodes[mesh.index(i, j)], mesh.nodes[mesh.index(i + 1, j)],
                                   mesh.nodes[mesh.index(i + 1, j + 1)], mesh.nodes[mesh.index(i, j + 1)]};
      double circulation = 0.0;
      for (std::size_t k = 0; k < 4; ++k) circulation += link_phase(A, cell[k], cell[(k + 1) % 4]);
      const double field = j < mesh.alpha_line ? 1.0 : p.a;
      worst = std::max(worst, std::abs(circulation - field * polygon_area(cell)));
    }
  CHECK(worst < 1e-12);
}

TEST_CASE("mesh geometry") {
  const HalfDiskMesh mesh = make_half_disk_mesh(10.0, 0.2, 2 * kPi / 3);
  CHECK(mesh.theta[mesh.alpha_line] == 2 * kPi / 3);
  CHECK(mesh.theta.front() == 0.0);
  CHECK(mesh.theta.back() == kPi);
  double total = 0.0;
  for (double m : mesh.mass) total += m;
  const double outer = (mesh.n_rings + 0.5) * mesh.dr;
  CHECK(total == doctest::Approx(0.5 * kPi * outer * outer).epsilon(1e-12));
  for (int k = 0; k < mesh.size(); ++k) {
    CHECK(mesh.nodes[k].y >= 0.0);
    CHECK(norm(mesh.nodes[k]) <= mesh.R);
  }
  CHECK(mesh.region[mesh.index(3, mesh.alpha_line)] == Region::D1);
  CHECK(mesh.region[mesh.index(3, mesh.alpha_line + 1)] == Region::D2);
  CHECK_THROWS_AS(make_half_disk_mesh(10.0, 0.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(make_half_disk_mesh(10.0, 0.2, kPi), InvalidArgument);
}

TEST_CASE("assembled operator is exactly Hermitian") {
  const WedgeParams p{kPi / 3, -0.5};
  const HalfDiskMesh mesh = make_half_disk_mesh(6.0, 0.3, p.alpha);
  const MagneticOperator op = assemble_magnetic_laplacian(p, mesh);
  const SparseMatrix diff = SparseMatrix(op.K.adjoint()) - op.K;
  double worst = 0.0;
  for (int c = 0; c < diff.outerSize(); ++c)
    for (SparseMatrix::InnerIterator it(diff, c); it; ++it) worst = std::max(worst, std::abs(it.value()));
  CHECK(worst == 0.0);
}

TEST_CASE("zero potential matches the dense oracle") {
  const WedgeParams p{kPi / 2, -1.0};
  const HalfDiskMesh mesh = make_half_disk_mesh(6.0, 0.3, p.alpha);
  REQUIRE(mesh.size() <= 3000);
  const EigenPair pair = lowest_eigenpair(assemble_magnetic_laplacian(p, mesh, 0.0));
  CHECK(std::abs(pair.value - dense_mu(p, mesh, 0.0)) < 1e-8);
  // half-disk, Neumann on the diameter and Dirichlet on the arc: j_{0,1}^2 / R^2
  const double j01 = 2.404825557695773;
  const double outer = (mesh.n_rings + 1) * mesh.dr;
  CHECK(pair.value == doctest::Approx(j01 * j01 / (outer * outer)).epsilon(2e-2));
}

TEST_CASE("Lanczos solver matches the dense oracle for three wedges") {
  for (const WedgeParams p : {WedgeParams{kPi / 2, -1.0}, WedgeParams{kPi / 3, -0.5}, WedgeParams{3 * kPi / 4, 0.5}}) {
    const HalfDiskMesh mesh = make_half_disk_mesh(7.0, 0.25, p.alpha);
    REQUIRE(mesh.size() <= 3000);
    const EigenPair pair = lowest_eigenpair(assemble_magnetic_laplacian(p, mesh));
    CHECK(std::abs(pair.value - dense_mu(p, mesh)) < 1e-8);
    CHECK(pair.residual < 1e-9);
  }
}

TEST_CASE("uniform-field validation reproduces Theta0") {
  const SpectralResult r = compute_mu(WedgeParams{kPi / 2, 1.0, true}, 20.0, 0.05);
  CHECK(std::abs(r.eigenvalue - spectral1d::theta0()) < 5e-3);
  CHECK(r.near_essential_floor);
}

TEST_CASE("mu(pi/2, -1) lies below Theta0") {
  const SpectralResult r = compute_mu(WedgeParams{kPi / 2, -1.0}, 15.0, 0.15);
  CHECK(r.eigenvalue < spectral1d::theta0() - 0.05);
  CHECK(r.eigenvalue > 0.0);
  CHECK_FALSE(r.near_essential_floor);
  CHECK(r.residual < 1e-9);
  const HalfDiskMesh mesh = make_half_disk_mesh(15.0, 0.15, kPi / 2);
  CHECK(l2_norm(mesh, r.eigenvector) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK_THROWS_AS(compute_mu(WedgeParams{kPi / 2, -1.0}, 10.0, 0.05), InvalidArgument);
  CHECK_THROWS_AS(compute_mu(WedgeParams{kPi / 2, -1.0}, 15.0, 0.2), InvalidArgument);
  CHECK_THROWS_AS(compute_mu(WedgeParams{kPi / 2, 1.0}, 15.0, 0.15), InvalidArgument);
}

TEST_CASE("bound-state certification") {
  const BoundStateReport bound = check_bound_state(WedgeParams{kPi / 2, -1.0}, 15.0, 0.15);
  CHECK(bound.is_bound());
  CHECK(bound.margin > 2.0 * bound.error_estimate);
  const BoundStateReport uniform = check_bound_state(WedgeParams{kPi / 2, 1.0, true}, 15.0, 0.15);
  CHECK(uniform.status == BoundStatus::Inconclusive);
  CHECK(std::abs(uniform.margin) < 2e-2);
}

TEST_CASE("wedge scan is reproducible bit for bit") {
  for (double a : {-1.0, -0.5})
    for (int k = 1; k <= 5; ++k) {
      const WedgeParams p{k * kPi / 6, a};
      const HalfDiskMesh mesh = make_half_disk_mesh(15.0, 0.15, p.alpha);
      const SpectralResult first = compute_mu(p, mesh);
      const SpectralResult second = compute_mu(p, mesh);
      CHECK(first.eigenvalue == second.eigenvalue);
      CHECK((first.eigenvector - second.eigenvector).cwiseAbs().maxCoeff() == 0.0);
      if (a == -1.0) CHECK(first.eigenvalue <= spectral1d::theta0() + 3 * 0.15);
    }
}

TEST_CASE("mu is non-increasing in the truncation radius") {
  const WedgeParams p{2 * kPi / 3, -1.0};
  double previous = 1e300;
  for (double R : {6.0, 9.0, 12.0, 15.0}) {
    const HalfDiskMesh mesh = make_half_disk_mesh(R, 0.15, p.alpha, 7.5);
    const double mu = compute_mu(p, mesh).eigenvalue;
    CHECK(mu <= previous + 1e-9);
    previous = mu;
  }
}

TEST_CASE("bound eigenfunction decays away from the corner") {
  const WedgeParams p{kPi / 2, -1.0};
  const HalfDiskMesh mesh = make_half_disk_mesh(30.0, 0.3, p.alpha);
  const SpectralResult r = compute_mu(p, mesh);
  const std::vector<double> rings = ring_maxima(mesh, r.eigenvector);
  const int half = static_cast<int>(std::lround(15.0 / mesh.dr));
  const int three_quarter = static_cast<int>(std::lround(22.5 / mesh.dr));
  CHECK(rings[half] / rings[three_quarter] >= 10.0);
}

TEST_CASE("gauge covariance of the discrete form") {
  const WedgeParams p{kPi / 3, -1.0};
  const HalfDiskMesh mesh = make_half_disk_mesh(6.0, 0.3, p.alpha);
  const SpectralResult r = compute_mu(p, mesh);
  std::mt19937_64 engine(7);
  std::uniform_real_distribution<double> coef(-0.5, 0.5);
  for (int trial = 0; trial < 5; ++trial) {
    double c[10];
    for (double& v : c) v = coef(engine);
    auto chi = [&](Vec2 x) {
      return c[0] * x.x + c[1] * x.y + c[2] * x.x * x.x + c[3] * x.x * x.y + c[4] * x.y * x.y +
             c[5] * x.x * x.x * x.x + c[6] * x.x * x.x * x.y + c[7] * x.x * x.y * x.y + c[8] * x.y * x.y * x.y;
    };
    auto grad = [&](Vec2 x) {
      return Vec2{c[0] + 2 * c[2] * x.x + c[3] * x.y + 3 * c[5] * x.x * x.x + 2 * c[6] * x.x * x.y + c[7] * x.y * x.y,
                  c[1] + c[3] * x.x + 2 * c[4] * x.y + c[6] * x.x * x.x + 2 * c[7] * x.x * x.y + 3 * c[8] * x.y * x.y};
    };
    auto A = [&](Vec2 x) { return wedge_potential(p, x); };
    auto shifted = [&](Vec2 x) { return wedge_potential(p, x) + grad(x); };
    Eigen::VectorXcd v = r.eigenvector;
    for (int k = 0; k < mesh.size(); ++k) v[k] *= std::polar(1.0, chi(mesh.nodes[k]));
    const double q0 = quadratic_form(A, mesh, r.eigenvector);
    const double q1 = quadratic_form(shifted, mesh, v);
    CHECK(std::abs(q1 - q0) < 1e-8);
  }
}
