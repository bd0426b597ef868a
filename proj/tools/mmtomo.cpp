#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mmtomo/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"mmtomo: multi-mode motional state tomography toolkit"};
  app.require_subcommand(1);

  std::string config;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::string format = "both";

  const char* commands[][2] = {
      {"simulate", "prepare the configured state and write its sideband scan (plus grid scans)"},
      {"fit", "fit Fock distributions to scans (and the Q dataset for a simulated reconstruction)"},
      {"reconstruct", "reconstruct the density matrix from the Q dataset"},
      {"verify", "simulate the two-mode parity/phase scan of the configured state"},
      {"calibrate", "simulate the spin-phase calibration (and the optional thermal fit)"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override every seed in the config");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--format", format, "json, csv or both")
        ->check(CLI::IsMember({"json", "csv", "both"}))
        ->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return mmtomo::kExitConfigError;
  }

  CLI::App* sub = app.get_subcommands().front();
  mmtomo::RunOptions options;
  options.config_path = config;
  if (sub->count("--seed") > 0) options.seed = seed;
  options.out_dir = out_dir;
  options.format = mmtomo::parse_output_format(format);
  return mmtomo::run_command(sub->get_name(), options, std::cout, std::cerr);
}
