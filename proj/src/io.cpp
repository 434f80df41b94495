#include "stepgl/io.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace stepgl::io {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v))
    throw InvalidArgument("config: key '" + key + "' expects a number, got '" + text + "'");
  return v;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument("config line " + std::to_string(number) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw InvalidArgument("config line " + std::to_string(number) + ": empty key");
    if (c.has(key)) throw InvalidArgument("config line " + std::to_string(number) + ": duplicate key '" + key + "'");
    c.values_[key] = trim(line.substr(eq + 1));
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) { return parse(read_file(path)); }

void Config::set(const std::string& key, const std::string& value) {
  const std::string k = trim(key);
  require(!k.empty(), "config: empty key");
  values_[k] = trim(value);
}

void Config::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos, "config override '" + assignment + "' is not key=value");
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_double(key, it->second);
}

int Config::get_int(const std::string& key, int fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  int v = 0;
  const std::string& t = it->second;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw InvalidArgument("config: key '" + key + "' expects an integer, got '" + t + "'");
  return v;
}

std::uint64_t Config::get_uint(const std::string& key, std::uint64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::uint64_t v = 0;
  const std::string& t = it->second;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size())
    throw InvalidArgument("config: key '" + key + "' expects a non-negative integer, got '" + t + "'");
  return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
  if (it->second == "false" || it->second == "0" || it->second == "no") return false;
  throw InvalidArgument("config: key '" + key + "' expects a boolean, got '" + it->second + "'");
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& t = it->second;
  std::vector<double> out;
  if (t.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(t);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    require(parts.size() == 3, "config: key '" + key + "' expects lo:hi:n");
    const double lo = parse_double(key, parts[0]), hi = parse_double(key, parts[1]);
    const double n = parse_double(key, parts[2]);
    require(n >= 1 && n == std::floor(n) && n <= 100000, "config: key '" + key + "' needs an integer count");
    for (int k = 0; k < static_cast<int>(n); ++k) out.push_back(n == 1 ? lo : lo + (hi - lo) * k / (n - 1));
    return out;
  }
  std::stringstream ss(t);
  for (std::string p; std::getline(ss, p, ',');) out.push_back(parse_double(key, p));
  require(!out.empty(), "config: key '" + key + "' is an empty list");
  return out;
}

void Config::check_keys(const std::vector<std::string>& allowed) const {
  for (const auto& [key, value] : values_)
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw InvalidArgument("config: unknown key '" + key + "'");
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [key, value] : values_) out += key + "=" + value + "\n";
  return out;
}

std::string Config::hash() const { return hex64(fnv1a(canonical())); }

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

RecordWriter::RecordWriter(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path_.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path_.parent_path().string() + ": " + ec.message());
  }
}

void RecordWriter::write(const Json& record) {
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot open " + path_.string() + " for appending");
  out << record.dump() << '\n';
  if (!out) throw IoError("write failed on " + path_.string());
}

std::vector<Json> read_records(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<Json> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const std::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(number) + ": malformed record");
    }
  }
  return out;
}

const std::string& GridFile::header_value(const std::string& key) const {
  for (const auto& [k, v] : header)
    if (k == key) return v;
  throw IoError("grid file: missing header key '" + key + "'");
}

const std::vector<double>& GridFile::array(const std::string& name) const {
  for (const auto& [k, v] : arrays)
    if (k == name) return v;
  throw IoError("grid file: missing array '" + name + "'");
}

void write_grid(const GridFile& grid, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "stepgl-grid 1\n";
  for (const auto& [k, v] : grid.header) {
    require(k.find_first_of(" \n") == std::string::npos && k != "array" && k != "end",
            "write_grid: invalid header key '" + k + "'");
    require(v.find('\n') == std::string::npos, "write_grid: header value contains a newline");
    out << k << ' ' << v << '\n';
  }
  for (const auto& [name, values] : grid.arrays) {
    out << "array " << name << ' ' << values.size() << '\n';
    for (double v : values) out << format_double(v) << '\n';
  }
  out << "end\n";
  if (!out) throw IoError("write failed on " + path.string());
}

GridFile read_grid(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  auto corrupt = [&](const std::string& why) { return IoError("corrupt grid file " + path.string() + ": " + why); };
  std::string line;
  if (!std::getline(in, line) || line != "stepgl-grid 1") throw corrupt("bad magic line");
  GridFile g;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw corrupt("malformed line '" + line + "'");
    const std::string key = line.substr(0, sp);
    if (key != "array") {
      g.header.emplace_back(key, line.substr(sp + 1));
      continue;
    }
    std::istringstream head(line.substr(sp + 1));
    std::string name;
    long long count = -1;
    if (!(head >> name >> count) || count < 0) throw corrupt("malformed array header");
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(count));
    for (long long k = 0; k < count; ++k) {
      if (!std::getline(in, line)) throw corrupt("array '" + name + "' is truncated");
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
      if (ec != std::errc() || ptr != line.data() + line.size()) throw corrupt("bad value in array '" + name + "'");
      values.push_back(v);
    }
    g.arrays.emplace_back(name, std::move(values));
  }
  if (!ended) throw corrupt("missing end marker");
  return g;
}

GridFile gl_state_grid(const gl::GLState& state, const gl::GLProblem& problem) {
  const gl::DiskMesh& mesh = *problem.mesh;
  require(state.psi.size() == mesh.size(), "gl_state_grid: state does not match mesh");
  GridFile g;
  const gl::StepFieldGeometry& geo = problem.geometry;
  g.header = {{"mesh", "disk-polar"},
              {"kappa", format_double(state.kappa)},
              {"H", format_double(state.H)},
              {"b", format_double(problem.b)},
              {"a", format_double(geo.a)},
              {"rho", format_double(geo.rho)},
              {"chord_offset", format_double(geo.chord_offset)},
              {"validation", geo.validation ? "1" : "0"},
              {"nodes", std::to_string(mesh.size())},
              {"rings", std::to_string(mesh.n_rings())},
              {"lines", std::to_string(mesh.n_lines())},
              {"energy", format_double(state.energy)}};
  std::vector<double> x, y, re, im, ax, ay;
  const std::vector<Vec2> A = gl::nodal_vector_potential(mesh, state.A);
  for (int n = 0; n < mesh.size(); ++n) {
    x.push_back(mesh.nodes[n].x);
    y.push_back(mesh.nodes[n].y);
    re.push_back(state.psi[n].real());
    im.push_back(state.psi[n].imag());
    ax.push_back(A[n].x);
    ay.push_back(A[n].y);
  }
  g.arrays = {{"x", x}, {"y", y}, {"psi_re", re}, {"psi_im", im}, {"A_x", ax}, {"A_y", ay},
              {"A_links", std::vector<double>(state.A.data(), state.A.data() + state.A.size())}};
  return g;
}

gl::GLState gl_state_from_grid(const GridFile& grid, const gl::GLProblem& problem) {
  const gl::DiskMesh& mesh = *problem.mesh;
  if (grid.header_value("mesh") != "disk-polar") throw IoError("grid file: not a disk state");
  const auto& re = grid.array("psi_re");
  const auto& im = grid.array("psi_im");
  const auto& links = grid.array("A_links");
  if (re.size() != static_cast<std::size_t>(mesh.size()) || im.size() != re.size() ||
      links.size() != mesh.links.size())
    throw IoError("grid file: state does not match the mesh");
  gl::GLState s;
  s.kappa = parse_double("kappa", grid.header_value("kappa"));
  s.H = parse_double("H", grid.header_value("H"));
  s.psi.resize(mesh.size());
  for (int n = 0; n < mesh.size(); ++n) s.psi[n] = Complex(re[n], im[n]);
  s.A = Eigen::Map<const Eigen::VectorXd>(links.data(), static_cast<Eigen::Index>(links.size()));
  s.energy = parse_double("energy", grid.header_value("energy"));
  return s;
}

GridFile halfdisk_grid(const Eigen::VectorXcd& u, const halfplane::HalfDiskMesh& mesh,
                       const halfplane::WedgeParams& wedge, const std::vector<std::pair<std::string, double>>& extra) {
  require(u.size() == mesh.size(), "halfdisk_grid: field does not match mesh");
  GridFile g;
  g.header = {{"mesh", "half-disk-polar"},
              {"R", format_double(mesh.R)},
              {"h", format_double(mesh.h)},
              {"alpha", format_double(wedge.alpha)},
              {"a", format_double(wedge.a)},
              {"nodes", std::to_string(mesh.size())}};
  for (const auto& [k, v] : extra) g.header.emplace_back(k, format_double(v));
  std::vector<double> x, y, re, im;
  for (int n = 0; n < mesh.size(); ++n) {
    x.push_back(mesh.nodes[n].x);
    y.push_back(mesh.nodes[n].y);
    re.push_back(u[n].real());
    im.push_back(u[n].imag());
  }
  g.arrays = {{"x", x}, {"y", y}, {"u_re", re}, {"u_im", im}};
  return g;
}

void write_energy_curve_csv(const effective::EnergyCurve& curve, const std::vector<double>& delta, std::ostream& out) {
  out << "b,E,converged,iterations,delta\n";
  for (std::size_t k = 0; k < curve.b_values.size(); ++k) {
    out << format_double(curve.b_values[k]) << ',' << format_double(curve.E_values[k]) << ','
        << int(curve.converged[k]) << ',' << curve.iterations[k] << ',';
    if (k < delta.size() && std::isfinite(delta[k])) out << format_double(delta[k]);
    out << '\n';
  }
}

namespace {

std::string join_points(const std::vector<int>& T) {
  std::string s;
  for (std::size_t k = 0; k < T.size(); ++k) s += (k ? ";" : "") + std::to_string(T[k] + 1);
  return s;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c == '\n' ? ' ' : c);
  return q + "\"";
}

}  // namespace

void write_phase_csv(const std::vector<diag::PhaseRow>& rows, std::ostream& out) {
  out << "kappa,b,regime,T,mass_1,mass_2,E_gst,sup_psi,converged,status\n";
  for (const diag::PhaseRow& r : rows)
    out << format_double(r.kappa) << ',' << format_double(r.b) << ',' << diag::to_string(r.regime) << ','
        << join_points(r.T) << ',' << format_double(r.mass.at(0)) << ',' << format_double(r.mass.at(1)) << ','
        << format_double(r.E_gst) << ',' << format_double(r.sup_psi) << ',' << int(r.converged) << ','
        << csv_field(r.status) << '\n';
}

Json phase_row_json(const diag::PhaseRow& r) {
  Json T = Json::array();
  for (int j : r.T) T.push_back(j + 1);
  return Json{{"kappa", r.kappa}, {"b", r.b},         {"regime", diag::to_string(r.regime)},
              {"T", T},           {"mass", r.mass},   {"E_gst", r.E_gst},
              {"sup_psi", r.sup_psi}, {"converged", r.converged}, {"status", r.status}};
}

}  // namespace stepgl::io
