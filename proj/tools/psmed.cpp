#include <CLI11.hpp>

#include "psmed/cli/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Principal-stratum mediation effects: estimation, simulation, sensitivity and oracle checks"};
  app.require_subcommand(1);
  std::string config, out;
  std::optional<std::uint64_t> seed;
  for (const char* name : {"estimate", "simulate", "generate", "sensitivity", "oracle"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config, "run config (JSON)")->required();
    sub->add_option("-o,--out", out, "output directory (file path for generate)");
    sub->add_option("-s,--seed", seed, "override the config seed");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : psmed::cli::kConfigExit;
  }
  return psmed::cli::run_command(app.get_subcommands().front()->get_name(), config, out, seed);
}
