#include "hsb/commands.hpp"
#include "hsb/errors.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char **argv) {
  CLI::App app{"Hard-sphere Boltzmann relaxation experiments on the torus"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  bool quick = false;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--out", out_dir, "output directory (overrides output_dir)");
  app.add_flag("--quick", quick, "9^3 grid, n_max = 1, t_end = 10");
  app.add_option("--seed", seed, "random seed (overrides seed)");
  app.fallthrough();
  for (const char *name : {"kernels", "spectrum", "propagator", "simulate"})
    app.add_subcommand(name, std::string("run the ") + name + " experiment");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e) == 0 ? 0 : 1; // help exits 0, usage errors count as validation errors
  }
  const std::string command = app.get_subcommands().front()->get_name();

  hsb::RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = hsb::load_config(config_path);
    if (quick) hsb::apply_quick_profile(cfg);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (seed) cfg.seed = *seed;
    cfg.experiment = command;
    hsb::validate_config(cfg);
  } catch (const hsb::ValidationError &e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  }
  return hsb::run_command(command, cfg);
}
