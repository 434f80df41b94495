#include "stepgl/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "stepgl/diagnostics.hpp"
#include "stepgl/effective.hpp"
#include "stepgl/gldomain.hpp"
#include "stepgl/halfplane.hpp"
#include "stepgl/spectral1d.hpp"

#ifndef STEPGL_VERSION
#define STEPGL_VERSION "unknown"
#endif

namespace stepgl::cli {

const char* const kToolVersion = STEPGL_VERSION;

namespace {

using io::Json;
using Defaults = std::vector<std::pair<std::string, std::string>>;

const std::map<Command, std::string> kNames = {
    {Command::Theta0, "theta0"},       {Command::Beta, "beta"},        {Command::Mu, "mu"},
    {Command::EffEnergy, "eff-energy"}, {Command::GlSolve, "gl-solve"}, {Command::Verify, "verify"},
    {Command::PhaseDiagram, "phase-diagram"}};

const std::string kHalfPi = "1.5707963267948966";

const Defaults& defaults(Command c) {
  static const std::map<Command, Defaults> table = {
      {Command::Theta0, {{"tol", "1e-6"}, {"curve", "false"}}},
      {Command::Beta, {{"a", "-0.5"}, {"tol", "1e-6"}, {"validation", "false"}, {"curve", "false"}}},
      {Command::Mu,
       {{"alpha", kHalfPi}, {"a", "-1"}, {"R", "15"}, {"h", "0.15"}, {"certify", "true"}, {"dump", "false"}}},
      {Command::EffEnergy,
       {{"alpha", kHalfPi},
        {"a", "-1"},
        {"R", "15"},
        {"h", "0.15"},
        {"b", "auto"},
        {"points", "12"},
        {"tol", "1e-8"},
        {"starts", "0"},
        {"decay", "true"}}},
      {Command::GlSolve,
       {{"kappa", "10"},
        {"b", "auto"},
        {"rho", "1"},
        {"c", "0"},
        {"a", "-1"},
        {"R", "15"},
        {"h", "0.15"},
        {"resolution", "0.2"},
        {"tol", "1e-7"},
        {"max_sweeps", "200"},
        {"start", "transplant"},
        {"dump", "true"}}},
      {Command::Verify, {{"preset", "disk-diameter"}, {"kappa", "20"}, {"R", "15"}, {"h", "0.15"}, {"resolution", "0.2"}}},
      {Command::PhaseDiagram,
       {{"kappa", "10"},
        {"b", "auto"},
        {"rho", "1"},
        {"c", "0"},
        {"a", "-1"},
        {"R", "15"},
        {"h", "0.15"},
        {"resolution", "0.2"},
        {"tol", "1e-7"},
        {"workers", "1"},
        {"threshold", "1e-3"}}},
  };
  return table.at(c);
}

void check_range(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw InvalidArgument("parameter '" + key + "' " + what);
}

void check_positive_list(const io::Config& p, const std::string& key) {
  if (p.get_string(key, "") == "auto") return;
  for (double v : p.get_doubles(key, {})) check_range(v > 0.0, key, "must be positive");
}

// Range checks that need no solver output.
void validate(Command c, const io::Config& p) {
  if (p.has("tol")) check_range(p.get_double("tol", 0) > 0 && p.get_double("tol", 0) <= 0.1, "tol", "must lie in (0, 0.1]");
  for (const char* key : {"curve", "validation", "certify", "dump", "decay"})
    if (p.has(key)) p.get_bool(key, false);
  if (p.has("alpha")) {
    const double alpha = p.get_double("alpha", 0);
    check_range(alpha > 0 && alpha < kPi, "alpha", "must lie in (0, pi)");
  }
  if (p.has("a")) {
    const double a = p.get_double("a", 0);
    const bool validation = p.get_bool("validation", false);
    check_range(a >= -1.0 && a != 0.0 && (a < 1.0 || (validation && a == 1.0)), "a", "must lie in [-1, 1) without 0");
  }
  if (p.has("R")) check_range(p.get_double("R", 0) >= 15.0, "R", "must be at least 15");
  if (p.has("h")) {
    const double h = p.get_double("h", 0);
    check_range(h > 0 && h <= p.get_double("R", 15) / 100, "h", "must lie in (0, R / 100]");
  }
  if (p.has("kappa")) {
    for (double k : p.get_doubles("kappa", {})) check_range(k >= 1.0 && k <= 400.0, "kappa", "must lie in [1, 400]");
    if (c != Command::PhaseDiagram)
      check_range(p.get_doubles("kappa", {}).size() == 1, "kappa", "takes a single value for this command");
  }
  if (p.has("b")) check_positive_list(p, "b");
  if (c == Command::GlSolve && p.get_string("b", "auto") != "auto")
    check_range(p.get_doubles("b", {}).size() == 1, "b", "takes a single value for this command");
  if (p.has("rho")) check_range(p.get_double("rho", 0) > 0.0, "rho", "must be positive");
  if (p.has("c")) {
    const double rho = p.get_double("rho", 1.0);
    check_range(std::abs(p.get_double("c", 0)) < 0.9 * rho, "c", "must satisfy |c| < 0.9 rho");
  }
  if (p.has("resolution")) {
    const double r = p.get_double("resolution", 0);
    check_range(r > 0 && r <= 1.0, "resolution", "must lie in (0, 1]");
  }
  if (p.has("points")) check_range(p.get_int("points", 0) >= 2 && p.get_int("points", 0) <= 200, "points", "must lie in [2, 200]");
  if (p.has("starts")) check_range(p.get_int("starts", -1) >= 0 && p.get_int("starts", -1) <= 32, "starts", "must lie in [0, 32]");
  if (p.has("max_sweeps")) check_range(p.get_int("max_sweeps", 0) >= 1, "max_sweeps", "must be at least 1");
  if (p.has("workers")) check_range(p.get_int("workers", 0) >= 1 && p.get_int("workers", 0) <= 64, "workers", "must lie in [1, 64]");
  if (p.has("threshold")) {
    const double t = p.get_double("threshold", 0);
    check_range(t > 0 && t < 1, "threshold", "must lie in (0, 1)");
  }
  if (p.has("start")) {
    const std::string s = p.get_string("start", "");
    check_range(s == "transplant" || s == "constant" || s == "random", "start", "must be transplant, constant or random");
  }
  if (c == Command::PhaseDiagram && p.get_string("b", "auto") != "auto") {
    const auto ks = p.get_doubles("kappa", {}), bs = p.get_doubles("b", {});
    const double kmin = *std::min_element(ks.begin(), ks.end()), bmin = *std::min_element(bs.begin(), bs.end());
    const double rho = p.get_double("rho", 1.0), offset = p.get_double("c", 0.0);
    check_range(8.0 / (kmin * std::sqrt(bmin)) < std::sqrt(rho * rho - offset * offset), "kappa",
                "is too small: the endpoint neighborhoods would overlap");
  }
  if (p.has("preset")) check_range(p.get_string("preset", "") == "disk-diameter", "preset", "must be disk-diameter");
}

gl::StepFieldGeometry geometry_of(const io::Config& p) {
  return gl::build_geometry(p.get_double("rho", 1.0), p.get_double("c", 0.0), p.get_double("a", -1.0));
}

halfplane::WedgeParams wedge_of(const io::Config& p) {
  halfplane::WedgeParams w{p.get_double("alpha", kPi / 2), p.get_double("a", -1.0)};
  return w;
}

Json params_json(const io::Config& p) {
  Json j = Json::object();
  for (const auto& [k, v] : p.values()) j[k] = v;
  return j;
}

Json base_record(const RunConfig& config) {
  return Json{{"command", to_string(config.command)},
              {"parameters", params_json(config.parameters)},
              {"provenance", {{"config_hash", config.config_hash}, {"tool_version", config.tool_version}}}};
}

std::string file_name(const RunConfig& config, const std::string& stem, const std::string& ext) {
  return stem + "_" + config.config_hash + ext;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed on " + path.string());
}

struct Outcome {
  Json outputs = Json::object();
  bool converged = true;
  std::vector<std::string> warnings;
  bool failed = false;  // a sub-run failed without throwing
};

double mid_window(double mu, double a) { return 0.5 * (1.0 / (std::abs(a) * spectral1d::theta0()) + 1.0 / mu); }

Outcome run_theta0(const RunConfig& cfg, std::ostream& log) {
  const auto& p = cfg.parameters;
  const spectral1d::FiberEigenvalueCurve c = spectral1d::compute_theta0(p.get_double("tol", 1e-6));
  Outcome o;
  o.outputs = {{"minimum", c.minimum},
               {"minimizing_xi", c.minimizing_xi},
               {"extrapolated", c.extrapolated},
               {"grid_nodes", c.grid_nodes},
               {"refinement_change", c.refinement_change}};
  if (p.get_bool("curve", false)) {
    const std::string name = file_name(cfg, "theta0_curve", ".csv");
    std::ostringstream out;
    spectral1d::write_curve_csv(c, out);
    write_text(cfg.out_dir / name, out.str());
    o.outputs["curve_file"] = name;
  }
  log << "Theta0 = " << io::Json(c.minimum).dump() << " at xi = " << io::Json(c.minimizing_xi).dump() << "\n";
  return o;
}

Outcome run_beta(const RunConfig& cfg, std::ostream& log) {
  const auto& p = cfg.parameters;
  const double a = p.get_double("a", -0.5);
  const spectral1d::FiberEigenvalueCurve c =
      spectral1d::compute_beta(a, p.get_double("tol", 1e-6), p.get_bool("validation", false));
  Outcome o;
  o.outputs = {{"minimum", c.minimum},
               {"minimizing_xi", c.minimizing_xi},
               {"extrapolated", c.extrapolated},
               {"grid_nodes", c.grid_nodes},
               {"refinement_change", c.refinement_change}};
  if (p.get_bool("curve", false)) {
    const std::string name = file_name(cfg, "beta_curve", ".csv");
    std::ostringstream out;
    spectral1d::write_curve_csv(c, out);
    write_text(cfg.out_dir / name, out.str());
    o.outputs["curve_file"] = name;
  }
  log << "beta(" << a << ") = " << io::Json(c.minimum).dump() << "\n";
  return o;
}

Outcome run_mu(const RunConfig& cfg, std::ostream& log) {
  const auto& p = cfg.parameters;
  const halfplane::WedgeParams w = wedge_of(p);
  const double R = p.get_double("R", 15), h = p.get_double("h", 0.15);
  const double theta0 = spectral1d::theta0();
  const halfplane::HalfDiskMesh mesh = halfplane::make_half_disk_mesh(R, h, w.alpha);
  const halfplane::SpectralResult r = halfplane::compute_mu(w, mesh);
  Outcome o;
  o.outputs = {{"mu", r.eigenvalue},
               {"residual", r.residual},
               {"essential_floor", std::abs(w.a) * theta0},
               {"near_essential_floor", r.near_essential_floor},
               {"nodes", mesh.size()}};
  if (p.get_bool("certify", true)) {
    const halfplane::BoundStateReport b = halfplane::check_bound_state(w, R, h);
    o.outputs["is_bound"] = b.is_bound();
    o.outputs["bound_status"] = halfplane::to_string(b.status);
    o.outputs["mu_fine"] = b.mu;
    o.outputs["margin"] = b.margin;
    o.outputs["error_estimate"] = b.error_estimate;
    if (!b.is_bound()) o.warnings.push_back("bound state not certified: margin within the discretization error");
  }
  if (p.get_bool("dump", false)) {
    const std::string name = file_name(cfg, "mu_eigenvector", ".grid");
    io::write_grid(io::halfdisk_grid(r.eigenvector, mesh, w, {{"mu", r.eigenvalue}}), cfg.out_dir / name);
    o.outputs["eigenvector_file"] = name;
  }
  log << "mu = " << io::Json(r.eigenvalue).dump() << " (floor " << io::Json(std::abs(w.a) * theta0).dump() << ")\n";
  return o;
}

Outcome run_eff_energy(const RunConfig& cfg, std::ostream& log) {
  const auto& p = cfg.parameters;
  const halfplane::WedgeParams w = wedge_of(p);
  auto mesh = std::make_shared<const halfplane::HalfDiskMesh>(
      halfplane::make_half_disk_mesh(p.get_double("R", 15), p.get_double("h", 0.15), w.alpha));
  const double mu = halfplane::compute_mu(w, *mesh).eigenvalue;
  const double lower = 1.0 / (std::abs(w.a) * spectral1d::theta0());
  std::vector<double> bs;
  if (p.get_string("b", "auto") == "auto") {
    const int n = p.get_int("points", 12);
    const double lo = 1.01 * lower, hi = 1.2 / mu;
    for (int k = 0; k < n; ++k) bs.push_back(lo + (hi - lo) * k / (n - 1));
  } else {
    bs = p.get_doubles("b", {});
    std::sort(bs.begin(), bs.end());
    for (double b : bs)
      if (b <= lower) throw InvalidArgument("parameter 'b' must exceed 1 / (|a| Theta0) = " + io::Json(lower).dump());
  }
  effective::MinimizeOptions opts;
  opts.tol = p.get_double("tol", 1e-8);
  const effective::EnergyCurve curve = effective::energy_curve(w, bs, mesh, opts);

  Outcome o;
  o.converged = curve.all_converged;
  std::vector<double> delta(bs.size(), NAN);
  Json points = Json::array();
  const auto base = effective::make_effective_problem(bs.front(), w, mesh);
  const int starts = p.get_int("starts", 0);
  for (std::size_t k = 0; k < bs.size(); ++k) {
    Json row = {{"b", bs[k]},
                {"E", curve.E_values[k]},
                {"converged", bool(curve.converged[k])},
                {"iterations", curve.iterations[k]},
                {"sup", curve.sup_norm[k]}};
    const bool nontrivial = curve.E_values[k] < -opts.zero_tol;
    if (p.get_bool("decay", true) && nontrivial) {
      const auto problem = base.with_b(bs[k]);
      const effective::MinimizerResult r = effective::minimize_J(problem, opts);
      const effective::DecayFit fit = effective::decay_fit(r, problem);
      delta[k] = fit.delta;
      row["delta"] = fit.delta;
      row["delta_quality"] = fit.quality;
    }
    if (starts > 0) {
      double best = curve.E_values[k];
      const auto problem = base.with_b(bs[k]);
      for (int s = 0; s < starts; ++s) {
        const auto r = effective::minimize_J(problem, effective::random_seed(*mesh, cfg.seed + s), opts);
        best = std::min(best, r.energy);
      }
      row["multistart_best"] = best;
      if (best < curve.E_values[k] - 1e-8 * std::max(1.0, std::abs(best)))
        o.warnings.push_back("random start improved E at b = " + io::Json(bs[k]).dump());
    }
    points.push_back(row);
  }
  const std::string name = file_name(cfg, "energy_curve", ".csv");
  std::ostringstream csv;
  io::write_energy_curve_csv(curve, delta, csv);
  write_text(cfg.out_dir / name, csv.str());
  o.outputs = {{"mu", mu},
               {"threshold", 1.0 / mu},
               {"threshold_estimate", curve.threshold_estimate},
               {"lower_end", lower},
               {"points", points},
               {"csv_file", name}};
  if (!curve.all_converged) {
    o.warnings.push_back("some energy-curve points did not converge");
    o.failed = true;
  }
  log << "E(b) on " << bs.size() << " points, threshold estimate " << io::Json(curve.threshold_estimate).dump()
      << " vs 1/mu = " << io::Json(1.0 / mu).dump() << "\n";
  return o;
}

gl::Seed seed_kind(const std::string& s) {
  if (s == "constant") return gl::Seed::Constant;
  if (s == "random") return gl::Seed::Random;
  return gl::Seed::Transplant;
}

Outcome run_gl_solve(const RunConfig& cfg, std::ostream& log) {
  const auto& p = cfg.parameters;
  const gl::StepFieldGeometry geometry = geometry_of(p);
  const double kappa = p.get_doubles("kappa", {}).front();
  gl::GLOptions opts;
  opts.tol = p.get_double("tol", 1e-7);
  opts.max_sweeps = p.get_int("max_sweeps", 200);
  opts.seed = seed_kind(p.get_string("start", "transplant"));
  opts.random_seed = cfg.seed;
  opts.effective_R = p.get_double("R", 15);
  opts.effective_h = p.get_double("h", 0.15);
  Outcome o;
  double b = 0.0;
  if (p.get_string("b", "auto") == "auto") {
    const auto mesh = halfplane::make_half_disk_mesh(opts.effective_R, opts.effective_h, geometry.alpha[0]);
    const double mu = halfplane::compute_mu({geometry.alpha[0], geometry.a}, mesh).eigenvalue;
    b = mid_window(mu, geometry.a);
    o.outputs["mu"] = mu;
  } else {
    b = p.get_doubles("b", {}).front();
  }
  auto mesh = std::make_shared<const gl::DiskMesh>(
      gl::make_disk_mesh(geometry, gl::DiskMeshOptions::adapted(geometry, kappa, b, p.get_double("resolution", 0.2))));
  const gl::GLProblem problem = gl::make_gl_problem(geometry, mesh, kappa, b);
  const gl::GLResult r = gl::minimize_GL(problem, opts);
  const gl::AprioriReport ap = gl::apriori_check(r.state, problem);
  o.converged = r.converged;
  o.warnings = r.warnings;
  o.outputs["b"] = b;
  o.outputs["H"] = problem.H;
  o.outputs["nodes"] = mesh->size();
  o.outputs["energy"] = r.state.energy;
  o.outputs["breakdown"] = {{"kinetic", r.state.breakdown.kinetic},
                            {"quadratic", r.state.breakdown.quadratic},
                            {"quartic", r.state.breakdown.quartic},
                            {"field", r.state.breakdown.field}};
  o.outputs["sweeps"] = r.sweeps;
  o.outputs["iterations"] = r.iterations;
  o.outputs["psi_gradient"] = r.psi_gradient;
  o.outputs["A_gradient"] = r.A_gradient;
  o.outputs["apriori"] = {{"sup_psi", ap.sup_psi},
                          {"kinetic_ratio", ap.kinetic_ratio},
                          {"field_ratio", ap.field_ratio},
                          {"sup_ok", ap.sup_ok}};
  if (p.get_bool("dump", true)) {
    const std::string name = file_name(cfg, "gl_state", ".grid");
    io::write_grid(io::gl_state_grid(r.state, problem), cfg.out_dir / name);
    o.outputs["state_file"] = name;
  }
  if (!r.converged) {
    o.warnings.push_back("GL minimization did not reach tol");
    o.failed = true;
  }
  log << "GL energy " << io::Json(r.state.energy).dump() << ", sup|psi| " << io::Json(ap.sup_psi).dump()
      << (r.converged ? "" : " (not converged)") << "\n";
  return o;
}

struct Check {
  std::string name;
  double value;
  double bound;
  bool pass;
};

Outcome run_verify(const RunConfig& cfg, std::ostream& log) {
  const auto& p = cfg.parameters;
  const double kappa = p.get_doubles("kappa", {}).front();
  const double R = p.get_double("R", 15), h = p.get_double("h", 0.15);
  const gl::StepFieldGeometry geometry = gl::build_geometry(1.0, 0.0, -1.0);
  const halfplane::WedgeParams w{geometry.alpha[0], geometry.a};
  const double theta0 = spectral1d::theta0();
  auto hm = std::make_shared<const halfplane::HalfDiskMesh>(halfplane::make_half_disk_mesh(R, h, w.alpha));
  const double mu = halfplane::compute_mu(w, *hm).eigenvalue;
  const double b = mid_window(mu, w.a);
  std::vector<Check> checks;
  checks.push_back({"bound-state margin", theta0 - mu, 0.0, theta0 - mu > 0.0});

  const std::vector<double> bs = {1.01 / theta0, b, 0.5 * (b + 1.0 / mu), 1.05 / mu, 1.2 / mu};
  const effective::EnergyCurve curve = effective::energy_curve(w, bs, hm);
  bool monotone = true;
  for (std::size_t k = 1; k < bs.size(); ++k) monotone = monotone && curve.E_values[k] >= curve.E_values[k - 1] - 1e-9;
  checks.push_back({"E-curve nondecreasing", double(monotone), 1.0, monotone});
  checks.push_back({"E(b) < 0 inside the window", curve.E_values[1], -1e-4, curve.E_values[1] < -1e-4});
  const double beyond = std::max(std::abs(curve.E_values[3]), std::abs(curve.E_values[4]));
  checks.push_back({"E = 0 beyond 1/mu", beyond, 1e-6, beyond < 1e-6});
  checks.push_back({"E-curve converged", double(curve.all_converged), 1.0, curve.all_converged});
  const double E = curve.E_values[1];

  auto mesh = std::make_shared<const gl::DiskMesh>(
      gl::make_disk_mesh(geometry, gl::DiskMeshOptions::adapted(geometry, kappa, b, p.get_double("resolution", 0.2))));
  const gl::GLProblem problem = gl::make_gl_problem(geometry, mesh, kappa, b);
  gl::GLOptions gopts;
  gopts.effective_R = R;
  gopts.effective_h = h;
  gopts.random_seed = cfg.seed;
  const gl::GLResult r = gl::minimize_GL(problem, gopts);
  const gl::AprioriReport ap = gl::apriori_check(r.state, problem);
  checks.push_back({"GL converged", double(r.converged), 1.0, r.converged});
  checks.push_back({"sup |psi| <= 1", ap.sup_psi, 1.001, ap.sup_psi <= 1.001});

  const double ell = diag::ell_for(kappa, diag::ell_constant(kappa, b));
  const diag::ConcentrationReport rep = diag::concentration_report(r.state, problem, ell, {E, E});
  checks.push_back({"L4 fraction inside neighborhoods", rep.fraction_inside, 0.9, rep.fraction_inside >= 0.9});
  const double field_share = rep.field_term / std::abs(rep.E_gst);
  checks.push_back({"field term share of E_gst", field_share, 0.01, field_share <= 0.01});
  const double rel_2E = rep.points[0].mismatch_2E / std::abs(2 * E);
  const double rel_2Eb = rep.points[0].mismatch_2E_over_b / std::abs(2 * E / b);
  const double best = std::min(rel_2E, rel_2Eb);
  checks.push_back({"relative L4 mismatch, better normalization", best, 0.5, best <= 0.5});

  Outcome o;
  o.converged = r.converged && curve.all_converged;
  o.warnings = r.warnings;
  Json list = Json::array();
  for (const Check& c : checks) {
    list.push_back({{"name", c.name}, {"value", c.value}, {"bound", c.bound}, {"pass", c.pass}});
    log << (c.pass ? "PASS  " : "FAIL  ") << c.name << ": " << io::Json(c.value).dump() << " (bound "
        << io::Json(c.bound).dump() << ")\n";
    if (!c.pass) o.failed = true;
  }
  Json pts = Json::array();
  for (const auto& pc : rep.points)
    pts.push_back({{"l4_mass", pc.l4_mass}, {"mismatch_2E", pc.mismatch_2E}, {"mismatch_2E_over_b", pc.mismatch_2E_over_b}});
  o.outputs = {{"theta0", theta0},
               {"mu", mu},
               {"b", b},
               {"E_eff", E},
               {"E_gst", rep.E_gst},
               {"ell", ell},
               {"points", pts},
               {"better_normalization", rel_2Eb <= rel_2E ? "2E/b" : "2E"},
               {"checks", list},
               {"passed", !o.failed}};
  log << (o.failed ? "verify: FAILED" : "verify: all checks passed") << "\n";
  return o;
}

Outcome run_phase_diagram(const RunConfig& cfg, std::ostream& log, std::vector<Json>& cell_records) {
  const auto& p = cfg.parameters;
  const gl::StepFieldGeometry geometry = geometry_of(p);
  const double R = p.get_double("R", 15), h = p.get_double("h", 0.15);
  spectral1d::theta0();
  std::vector<double> mu(2);
  for (int j = 0; j < 2; ++j) {
    if (j == 1 && geometry.alpha[1] == geometry.alpha[0]) {
      mu[1] = mu[0];
      continue;
    }
    const auto mesh = halfplane::make_half_disk_mesh(R, h, geometry.alpha[j]);
    mu[j] = halfplane::compute_mu({geometry.alpha[j], geometry.a}, mesh).eigenvalue;
  }
  const std::vector<double> kappas = p.get_doubles("kappa", {});
  std::vector<double> bs;
  if (p.get_string("b", "auto") == "auto") {
    const double m = std::min(mu[0], mu[1]);
    for (double f : {0.9, 0.95, 1.05, 1.2}) bs.push_back(f / m);
  } else {
    bs = p.get_doubles("b", {});
  }
  diag::PhaseOptions opts;
  opts.mesh_resolution = p.get_double("resolution", 0.2);
  opts.regime_threshold = p.get_double("threshold", 1e-3);
  opts.gl.tol = p.get_double("tol", 1e-7);
  opts.gl.random_seed = cfg.seed;
  opts.gl.effective_R = R;
  opts.gl.effective_h = h;
  opts.ell_constant = diag::ell_constant(*std::min_element(kappas.begin(), kappas.end()),
                                         *std::min_element(bs.begin(), bs.end()));

  struct Cell {
    double kappa, b;
  };
  std::vector<Cell> cells;
  for (double k : kappas)
    for (double b : bs) cells.push_back({k, b});
  std::vector<diag::PhaseRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++)
      rows[i] = diag::phase_diagram(geometry, {cells[i].kappa}, {cells[i].b}, mu, opts).front();
  };
  const int n_workers = std::min<int>(p.get_int("workers", 1), static_cast<int>(cells.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  }
  diag::label_regimes(rows, opts.regime_threshold);

  Outcome o;
  Json table = Json::array();
  for (const diag::PhaseRow& row : rows) {
    table.push_back(io::phase_row_json(row));
    if (row.status != "ok") {
      o.failed = true;
      o.converged = o.converged && row.converged;
      o.warnings.push_back("cell kappa = " + io::Json(row.kappa).dump() + ", b = " + io::Json(row.b).dump() + ": " +
                           row.status);
    }
    Json cell = base_record(cfg);
    cell["cell"] = io::phase_row_json(row);
    cell_records.push_back(std::move(cell));
  }
  const std::string name = file_name(cfg, "phase", ".csv");
  std::ostringstream csv;
  io::write_phase_csv(rows, csv);
  write_text(cfg.out_dir / name, csv.str());
  o.outputs = {{"mu", mu}, {"ell_constant", opts.ell_constant}, {"rows", table.size()}, {"csv_file", name}};
  log << "phase diagram: " << rows.size() << " cells";
  for (const diag::PhaseRow& row : rows)
    log << "\n  kappa " << row.kappa << "  b " << io::Json(row.b).dump() << "  " << diag::to_string(row.regime) << "  "
        << row.status;
  log << "\n";
  return o;
}

}  // namespace

std::string to_string(Command c) { return kNames.at(c); }

Command parse_command(const std::string& name) {
  for (const auto& [c, n] : kNames)
    if (n == name) return c;
  throw InvalidArgument("unknown command '" + name + "'");
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [c, n] : kNames) v.push_back(n);
    return v;
  }();
  return names;
}

const std::vector<std::string>& allowed_keys(Command c) {
  static std::map<Command, std::vector<std::string>> table = [] {
    std::map<Command, std::vector<std::string>> t;
    for (const auto& [cmd, name] : kNames) {
      std::vector<std::string> keys = {"out", "seed"};
      for (const auto& [k, v] : defaults(cmd)) keys.push_back(k);
      t[cmd] = keys;
    }
    return t;
  }();
  return table.at(c);
}

RunConfig make_run_config(Command command, const io::Config& user) {
  user.check_keys(allowed_keys(command));
  RunConfig cfg;
  cfg.command = command;
  for (const auto& [k, v] : defaults(command)) cfg.parameters.set(k, user.get_string(k, v));
  validate(command, cfg.parameters);
  cfg.seed = user.get_uint("seed", 1);
  cfg.parameters.set("seed", std::to_string(cfg.seed));
  if (user.has("out")) {
    cfg.out_dir = user.get_string("out", ".");
  } else if (const char* env = std::getenv("STEPGL_OUT"); env && *env) {
    cfg.out_dir = env;
  } else {
    cfg.out_dir = ".";
  }
  check_range(!cfg.out_dir.empty(), "out", "must not be empty");
  cfg.tool_version = kToolVersion;
  cfg.config_hash = io::hex64(io::fnv1a(to_string(command) + "\n" + cfg.parameters.canonical()));
  return cfg;
}

RunResult run(const RunConfig& config, std::ostream& log) {
  std::error_code ec;
  std::filesystem::create_directories(config.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + config.out_dir.string() + ": " + ec.message());
  io::RecordWriter records(config.out_dir / "records.jsonl");
  io::RecordWriter timings(config.out_dir / "timings.jsonl");

  RunResult result;
  Json record = base_record(config);
  std::vector<Json> cell_records;
  const auto start = std::chrono::steady_clock::now();
  try {
    Outcome o;
    switch (config.command) {
      case Command::Theta0: o = run_theta0(config, log); break;
      case Command::Beta: o = run_beta(config, log); break;
      case Command::Mu: o = run_mu(config, log); break;
      case Command::EffEnergy: o = run_eff_energy(config, log); break;
      case Command::GlSolve: o = run_gl_solve(config, log); break;
      case Command::Verify: o = run_verify(config, log); break;
      case Command::PhaseDiagram: o = run_phase_diagram(config, log, cell_records); break;
    }
    record["outputs"] = o.outputs;
    record["converged"] = o.converged;
    record["warnings"] = o.warnings;
    record["status"] = o.failed ? "failed" : "ok";
    result.exit_status = o.failed ? 1 : 0;
  } catch (const InvalidArgument& e) {
    record["status"] = "failed";
    record["error"] = e.what();
    result.exit_status = 1;
    log << "error: " << e.what() << "\n";
  } catch (const Error& e) {
    record["status"] = "failed";
    record["error"] = e.what();
    result.exit_status = 1;
    log << "error: " << e.what() << "\n";
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (const Json& c : cell_records) {
    records.write(c);
    result.records.push_back(c);
  }
  records.write(record);
  result.records.push_back(record);
  timings.write(Json{{"command", to_string(config.command)}, {"config_hash", config.config_hash}, {"seconds", seconds}});
  return result;
}

}  // namespace stepgl::cli
