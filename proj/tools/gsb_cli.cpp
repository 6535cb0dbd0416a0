#include "runner.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Gaussian Schrodinger bridges and Sinkhorn iterations"};
  app.require_subcommand(1);
  std::string config, out;
  std::uint64_t seed = 0;
  bool quiet = false;
  for (const std::string& mode : gsb::runner::modes()) {
    CLI::App* sub = app.add_subcommand(mode, "run the " + mode + " experiment");
    sub->add_option("--config", config, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory (default: the config's output field)");
    sub->add_option("--seed", seed, "seed, overrides the config");
    sub->add_flag("--quiet", quiet, "no progress output");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : gsb::runner::kConfigError;
  }
  CLI::App* sub = app.get_subcommands().front();
  std::optional<std::uint64_t> s;
  if (sub->count("--seed")) s = seed;
  return gsb::runner::run_command(sub->get_name(), config, out, s, quiet, std::cout, std::cerr);
}
