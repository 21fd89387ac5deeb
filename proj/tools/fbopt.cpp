#include <CLI11.hpp>

#include <iostream>

#include "fbopt/errors.hpp"
#include "fbopt/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Adjoint-based optimal control of free-boundary problems on moving point clouds"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  CLI::App* run = app.add_subcommand("run", "Run the command named in a config file");
  run->add_option("config", config_path, "INI config file")->required();
  run->add_option("--set", overrides, "Override one key, section.key=value (repeatable)");

  CLI11_PARSE(app, argc, argv);

  try {
    const fbopt::RunConfig cfg = fbopt::parse_config(config_path, overrides);
    const fbopt::RunSummary s = fbopt::run(cfg);
    std::cout << s.line() << std::endl;
    if (!s.ok) {
      std::cerr << "error: shape-calculus suite has failing rows, see " << cfg.output << "/shapecalc.csv\n";
      return 2;
    }
  } catch (const fbopt::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
