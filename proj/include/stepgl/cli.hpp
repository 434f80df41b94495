#pragma once

// Batch runner behind the stepgl executable. A run is one command plus a flat
// parameter set; every run appends self-describing JSON-lines records to
// <out>/records.jsonl and wall-clock timings to <out>/timings.jsonl.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "stepgl/io.hpp"

namespace stepgl::cli {

extern const char* const kToolVersion;

enum class Command { Theta0, Beta, Mu, EffEnergy, GlSolve, Verify, PhaseDiagram };

std::string to_string(Command c);
// Throws InvalidArgument for unknown names.
Command parse_command(const std::string& name);
const std::vector<std::string>& command_names();

// Keys accepted by a command, including the common "out" and "seed".
const std::vector<std::string>& allowed_keys(Command c);

struct RunConfig {
  Command command = Command::Theta0;
  io::Config parameters;  // resolved: every key of the command with its value
  std::filesystem::path out_dir;
  std::uint64_t seed = 1;
  std::string config_hash;
  std::string tool_version;
};

// Fills defaults, checks keys and ranges, and resolves the output directory
// ("out" key, else $STEPGL_OUT, else "."). Throws InvalidArgument naming the
// offending key. No solver runs here.
RunConfig make_run_config(Command command, const io::Config& user);

struct RunResult {
  int exit_status = 0;  // 0 iff every sub-run succeeded
  std::vector<io::Json> records;
};

// Executes the command, appends its records and prints a short summary to `log`.
RunResult run(const RunConfig& config, std::ostream& log);

}  // namespace stepgl::cli
