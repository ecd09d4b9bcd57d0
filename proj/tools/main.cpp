// SPDX-License-Identifier: Apache-2.0
//
// ghostsim command-line interface. Subcommands dispatch the pipelines
// configured in an INI document; see README.md for the config schema and
// file formats.
//
// Exit codes: 0 success, 2 configuration/validation error, 3 numeric or
// domain error, 4 I/O error, 5 unexpected failure.

#include "gi/io.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  unsigned workers = 0;
  bool workers_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Config file (INI)")
      ->required();
  cmd->add_option("--out", args.out_dir, "Output directory override");
  cmd->add_option("--seed", args.seed, "Master seed override")
      ->each([&](const std::string&) { args.seed_set = true; });
  cmd->add_option("--workers", args.workers,
                  "Worker count override (0 = one per hardware thread)")
      ->each([&](const std::string&) { args.workers_set = true; });
}

int dispatch(gi::Command expected, const CommonArgs& args) {
  gi::RunConfig config = gi::parse_config_file(args.config_path);
  if (config.command != expected) {
    throw gi::ConfigError(std::string("config declares command '") +
                          gi::to_string(config.command) +
                          "' but the CLI subcommand is '" +
                          gi::to_string(expected) + "'");
  }
  if (!args.out_dir.empty()) config.output_dir = args.out_dir;
  if (args.seed_set) {
    config.master_seed = args.seed;
    if (config.hbt) config.hbt->seed = args.seed;
    if (config.ghost) config.ghost->seed = args.seed;
  }
  if (args.workers_set) config.workers = args.workers;

  // GHOSTSIM_WORKERS overrides any configured worker count. It is a pure
  // performance knob: outputs are bitwise independent of it.
  if (const char* env = std::getenv("GHOSTSIM_WORKERS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end == env || *end != '\0')
      throw gi::ConfigError(std::string("malformed GHOSTSIM_WORKERS value '") +
                            env + "'");
    config.workers = static_cast<unsigned>(v);
  }

  const gi::RunManifest manifest = gi::run(config);
  std::cout << "ghostsim " << manifest.command << ": wrote "
            << manifest.output_checksums.size() + 1 << " files to "
            << config.output_dir.string() << " in " << manifest.wall_time_s
            << " s\n";
  for (const auto& [name, checksum] : manifest.output_checksums)
    std::cout << "  " << name << "  fnv1a64=" << checksum << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "ghostsim: second-order correlation (ghost) imaging simulator for "
      "thermal bosons, fermions and classical particles"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    gi::Command command;
    CommonArgs args;
  };
  Sub subs[] = {
      {"hbt-scan", "Two-detector coincidence scan (HBT)", gi::Command::hbt_scan,
       {}},
      {"ghost-image", "Monte Carlo ghost-image reconstruction",
       gi::Command::ghost_image, {}},
      {"analytic", "Closed-form g2 profiles and image quadrature",
       gi::Command::analytic, {}},
      {"fit", "Least-squares profile fitting (sinc^2 / Gaussian dips)",
       gi::Command::fit, {}},
      {"section", "Cut a 1D section through a 2D map", gi::Command::section,
       {}},
  };
  for (Sub& sub : subs) add_common(app.add_subcommand(sub.name, sub.help),
                                   sub.args);

  CLI11_PARSE(app, argc, argv);

  try {
    for (Sub& sub : subs)
      if (app.get_subcommand(sub.name)->parsed())
        return dispatch(sub.command, sub.args);
    std::cerr << "ghostsim: no subcommand selected\n";
    return 2;
  } catch (const gi::ConfigError& e) {
    std::cerr << "ghostsim: config error: " << e.what() << "\n";
    return 2;
  } catch (const gi::ValidationError& e) {
    std::cerr << "ghostsim: validation error: " << e.what() << "\n";
    return 2;
  } catch (const gi::DomainError& e) {
    std::cerr << "ghostsim: " << e.what() << "\n";
    return 3;
  } catch (const gi::ShapeError& e) {
    std::cerr << "ghostsim: " << e.what() << "\n";
    return 3;
  } catch (const gi::RangeError& e) {
    std::cerr << "ghostsim: " << e.what() << "\n";
    return 3;
  } catch (const gi::IoError& e) {
    std::cerr << "ghostsim: I/O error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "ghostsim: unexpected error: " << e.what() << "\n";
    return 5;
  }
}
