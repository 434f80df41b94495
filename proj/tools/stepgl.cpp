#include <CLI11.hpp>

#include <iostream>
#include <map>

#include "stepgl/cli.hpp"

using namespace stepgl;

int main(int argc, char** argv) {
  CLI::App app{"Step-field Ginzburg-Landau experiments"};
  app.set_version_flag("--version", std::string(cli::kToolVersion));
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);

  struct Sub {
    cli::Command command;
    CLI::App* app;
    std::map<std::string, std::string> flags;
    std::string config_file;
    std::vector<std::string> overrides;
  };
  std::vector<Sub> subs;
  subs.reserve(cli::command_names().size());
  for (const std::string& name : cli::command_names()) {
    const cli::Command c = cli::parse_command(name);
    subs.push_back({c, app.add_subcommand(name), {}, {}, {}});
  }
  for (Sub& s : subs) {
    s.app->add_option("--config", s.config_file, "key = value file")->check(CLI::ExistingFile);
    s.app->add_option("--set", s.overrides, "override, key=value (repeatable)");
    for (const std::string& key : cli::allowed_keys(s.command))
      s.app->add_option("--" + key, s.flags[key]);
  }

  CLI11_PARSE(app, argc, argv);

  for (Sub& s : subs) {
    if (!s.app->parsed()) continue;
    try {
      io::Config config = s.config_file.empty() ? io::Config{} : io::Config::load(s.config_file);
      for (const auto& [key, value] : s.flags)
        if (s.app->count("--" + key)) config.set(key, value);
      for (const std::string& o : s.overrides) config.set_assignment(o);
      const cli::RunConfig run = cli::make_run_config(s.command, config);
      return cli::run(run, std::cout).exit_status;
    } catch (const InvalidArgument& e) {
      std::cerr << "usage error: " << e.what() << "\n";
      return 2;
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 2;
}
