#pragma once

// Run configuration, JSON-lines records, CSV tables and grid files.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stepgl/diagnostics.hpp"
#include "stepgl/effective.hpp"
#include "stepgl/gldomain.hpp"
#include "json.hpp"

namespace stepgl::io {

using Json = nlohmann::ordered_json;

// Flat "key = value" text, '#' starts a comment. Later assignments of the
// same key are rejected; overrides go through set().
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  // "key=value"
  void set_assignment(const std::string& assignment);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated list, or "lo:hi:n" for n evenly spaced values.
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

  // Throws InvalidArgument naming the first key not in `allowed`.
  void check_keys(const std::vector<std::string>& allowed) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  // Sorted "key=value" lines; the hash is taken over this text.
  std::string canonical() const;
  std::string hash() const;

 private:
  std::map<std::string, std::string> values_;
};

std::uint64_t fnv1a(const std::string& text);
std::string hex64(std::uint64_t v);

// Appends one compact JSON document per line.
class RecordWriter {
 public:
  explicit RecordWriter(std::filesystem::path path);
  void write(const Json& record);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

std::vector<Json> read_records(const std::filesystem::path& path);

// Text grid file:
//   stepgl-grid 1
//   <key> <value>            header lines
//   array <name> <count>     followed by count values, one per line (%.17g)
//   end
struct GridFile {
  std::vector<std::pair<std::string, std::string>> header;
  std::vector<std::pair<std::string, std::vector<double>>> arrays;

  const std::string& header_value(const std::string& key) const;
  const std::vector<double>& array(const std::string& name) const;
};

void write_grid(const GridFile& grid, const std::filesystem::path& path);
GridFile read_grid(const std::filesystem::path& path);

// Disk state: psi (re, im), nodal A (x, y) and node coordinates, plus the
// link integrals of A for an exact reload.
GridFile gl_state_grid(const gl::GLState& state, const gl::GLProblem& problem);
gl::GLState gl_state_from_grid(const GridFile& grid, const gl::GLProblem& problem);

// Half-disk field (eigenvector or effective minimizer) with node coordinates.
GridFile halfdisk_grid(const Eigen::VectorXcd& u, const halfplane::HalfDiskMesh& mesh,
                       const halfplane::WedgeParams& wedge, const std::vector<std::pair<std::string, double>>& extra);

// CSV "b,E,converged,iterations,delta" (delta empty where no fit exists).
void write_energy_curve_csv(const effective::EnergyCurve& curve, const std::vector<double>& delta, std::ostream& out);
// CSV "kappa,b,regime,T,mass_1,mass_2,E_gst,sup_psi,converged,status"; T lists 1-based points joined by ';'.
void write_phase_csv(const std::vector<diag::PhaseRow>& rows, std::ostream& out);
Json phase_row_json(const diag::PhaseRow& row);

}  // namespace stepgl::io
