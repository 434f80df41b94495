#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "stepgl/io.hpp"

using namespace stepgl;
using namespace stepgl::io;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "stepgl_test_io";
  std::filesystem::create_directories(dir);
  const auto p = dir / name;
  std::filesystem::remove(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing") {
  const Config c = Config::parse("# run\nkappa = 20\n b=1.8 # mid\nname = disk\nflag = yes\nlist = 1, 2.5,3\nrange = 0:1:5\n");
  CHECK(c.get_double("kappa", 0) == 20.0);
  CHECK(c.get_int("kappa", 0) == 20);
  CHECK(c.get_double("b", 0) == 1.8);
  CHECK(c.get_string("name", "") == "disk");
  CHECK(c.get_bool("flag", false));
  CHECK(c.get_double("missing", 7.0) == 7.0);
  CHECK(c.get_doubles("list", {}) == std::vector<double>{1.0, 2.5, 3.0});
  const auto r = c.get_doubles("range", {});
  REQUIRE(r.size() == 5);
  CHECK(r[2] == 0.5);
  CHECK(r[4] == 1.0);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(Config::parse("kappa 20\n"), InvalidArgument);
  CHECK_THROWS_AS(Config::parse("= 3\n"), InvalidArgument);
  CHECK_THROWS_AS(Config::parse("a = 1\na = 2\n"), InvalidArgument);
  const Config c = Config::parse("kappa = twenty\nn = 2.5\nf = maybe\nr = 0:1\n");
  CHECK_THROWS_AS(c.get_double("kappa", 0), InvalidArgument);
  CHECK_THROWS_AS(c.get_int("n", 0), InvalidArgument);
  CHECK_THROWS_AS(c.get_bool("f", false), InvalidArgument);
  CHECK_THROWS_AS(c.get_doubles("r", {}), InvalidArgument);
  try {
    c.check_keys({"kappa", "n", "f"});
    FAIL("unknown key accepted");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("'r'") != std::string::npos);
  }
  CHECK_THROWS_AS(Config::load("/nonexistent/stepgl.conf"), IoError);
}

TEST_CASE("config overrides and hash") {
  Config a = Config::parse("kappa = 20\nb = 1.8\n");
  const Config b = Config::parse("b=1.8\nkappa=20\n");
  CHECK(a.canonical() == "b=1.8\nkappa=20\n");
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 16);
  a.set_assignment("kappa=40");
  CHECK(a.get_double("kappa", 0) == 40.0);
  CHECK(a.hash() != b.hash());
  CHECK_THROWS_AS(a.set_assignment("kappa"), InvalidArgument);
  CHECK(hex64(fnv1a("")) == "cbf29ce484222325");
  CHECK(hex64(fnv1a("a")) == "af63dc4c8601ec8c");
}

TEST_CASE("records round trip") {
  const auto p = scratch("records.jsonl");
  RecordWriter w(p);
  w.write(Json{{"command", "theta0"}, {"value", 0.1 + 0.2}});
  w.write(Json{{"command", "mu"}, {"list", {1, 2, 3}}});
  const auto r = read_records(p);
  REQUIRE(r.size() == 2);
  CHECK(r[0]["value"].get<double>() == 0.1 + 0.2);
  CHECK(r[1]["list"].size() == 3);
  CHECK(r[0].dump() == R"({"command":"theta0","value":0.30000000000000004})");
  std::ofstream(p, std::ios::app) << "{broken\n";
  CHECK_THROWS_AS(read_records(p), IoError);
}

TEST_CASE("grid files round trip bit for bit") {
  GridFile g;
  g.header = {{"mesh", "test"}, {"note", "two words"}};
  g.arrays = {{"x", {0.1, -1e-300, 1.0 / 3.0, 6.02214076e23}}, {"empty", {}}};
  const auto p = scratch("grid.txt");
  write_grid(g, p);
  const GridFile r = read_grid(p);
  CHECK(r.header == g.header);
  CHECK(r.header_value("note") == "two words");
  CHECK(r.array("x") == g.array("x"));
  CHECK(r.array("empty").empty());
  CHECK_THROWS_AS(r.array("y"), IoError);
  CHECK_THROWS_AS(r.header_value("kappa"), IoError);
  const auto q = scratch("grid2.txt");
  write_grid(r, q);
  CHECK(slurp(p) == slurp(q));
}

TEST_CASE("corrupt grid files are rejected") {
  GridFile g;
  g.arrays = {{"x", {1.0, 2.0, 3.0}}};
  const auto p = scratch("grid_bad.txt");
  write_grid(g, p);
  const std::string text = slurp(p);

  std::ofstream(p, std::ios::trunc) << text.substr(0, text.find("3\n"));
  CHECK_THROWS_AS(read_grid(p), IoError);
  std::ofstream(p, std::ios::trunc) << text.substr(0, text.find("end"));
  CHECK_THROWS_AS(read_grid(p), IoError);
  std::string bad = text;
  bad.replace(bad.find("2\n"), 1, "2x");
  std::ofstream(p, std::ios::trunc) << bad;
  CHECK_THROWS_AS(read_grid(p), IoError);
  std::ofstream(p, std::ios::trunc) << "grid 2\nend\n";
  CHECK_THROWS_AS(read_grid(p), IoError);
}

TEST_CASE("GL state dump reloads exactly") {
  const auto geometry = gl::build_geometry(1.0, 0.0, -1.0);
  const auto mesh = std::make_shared<const gl::DiskMesh>(gl::make_disk_mesh(geometry, gl::DiskMeshOptions::uniform(0.1)));
  const gl::GLProblem problem = gl::make_gl_problem(geometry, mesh, 4.0, 1.5);
  gl::GLState s = gl::normal_state(problem);
  for (int n = 0; n < mesh->size(); ++n) s.psi[n] = Complex(0.5 + 0.1 * mesh->nodes[n].x, 0.2 * mesh->nodes[n].y);
  s.energy = gl::evaluate_GL(s, problem).energy;
  const auto p = scratch("state.txt");
  write_grid(gl_state_grid(s, problem), p);
  const GridFile g = read_grid(p);
  CHECK(g.array("x").size() == static_cast<std::size_t>(mesh->size()));
  CHECK(g.array("A_x").size() == static_cast<std::size_t>(mesh->size()));
  const gl::GLState t = gl_state_from_grid(g, problem);
  CHECK(t.psi == s.psi);
  CHECK(t.A == s.A);
  CHECK(gl::evaluate_GL(t, problem).energy == s.energy);
  const auto other = std::make_shared<const gl::DiskMesh>(gl::make_disk_mesh(geometry, gl::DiskMeshOptions::uniform(0.2)));
  CHECK_THROWS_AS(gl_state_from_grid(g, gl::make_gl_problem(geometry, other, 4.0, 1.5)), IoError);
}

TEST_CASE("CSV tables") {
  effective::EnergyCurve curve;
  curve.b_values = {1.7, 1.9};
  curve.E_values = {-0.05, -1e-12};
  curve.iterations = {40, 3};
  curve.converged = {1, 1};
  std::ostringstream e;
  write_energy_curve_csv(curve, {0.29, NAN}, e);
  CHECK(e.str() == "b,E,converged,iterations,delta\n1.7,-0.050000000000000003,1,40,0.28999999999999998\n"
                   "1.8999999999999999,-9.9999999999999998e-13,1,3,\n");

  diag::PhaseRow row;
  row.kappa = 10;
  row.b = 2;
  row.T = {0, 1};
  row.mass = {0.5, 0.25};
  row.regime = diag::Regime::NearAllPoints;
  row.status = "failed, \"bad\"";
  std::ostringstream p;
  write_phase_csv({row}, p);
  CHECK(p.str() == "kappa,b,regime,T,mass_1,mass_2,E_gst,sup_psi,converged,status\n"
                   "10,2,near-all-points,1;2,0.5,0.25,0,0,0,\"failed, \"\"bad\"\"\"\n");
  const Json j = phase_row_json(row);
  CHECK(j["T"] == Json::array({1, 2}));
  CHECK(j["regime"] == "near-all-points");
}
