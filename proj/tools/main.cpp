#include <CLI11.hpp>

#include <iostream>

#include "atobs/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"appointed-time observer toolkit"};
  app.require_subcommand(1);

  atobs::cli::CommonOptions opt;

  const auto add_common = [&opt](CLI::App* cmd, bool out_required) {
    cmd->add_option("--config", opt.config_path, "JSON run description")->required();
    auto* out = cmd->add_option("--out", opt.out_dir, "output directory, created when missing");
    if (out_required) out->required();
    cmd->add_option("--seed", opt.seed, "override every seed in the config");
  };

  CLI::App* check = app.add_subcommand("check", "verify the existence conditions of a plant");
  add_common(check, false);

  CLI::App* synth = app.add_subcommand("synth", "synthesize an observer realization");
  add_common(synth, true);

  CLI::App* simulate =
      app.add_subcommand("simulate", "simulate plant and observer, write the trajectory CSV");
  add_common(simulate, true);
  simulate->add_option("--tol", opt.tol, "exactness tolerance on the relative error");

  CLI::App* consensus =
      app.add_subcommand("consensus", "design and simulate the swarm protocol");
  add_common(consensus, true);

  CLI::App* repro = app.add_subcommand(
      "repro-example", "re-run the worked third-order design against stored reference values");
  repro->add_option("--out", opt.out_dir, "output directory for the verdict report");
  repro->add_option("--seed", opt.seed,
                    "synthesis seed (the reference values must not depend on it)");
  repro->add_option("--golden", opt.golden_path,
                    "JSON file overriding the built-in reference values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : atobs::cli::kExitConfig;
  }

  try {
    if (check->parsed()) return atobs::cli::run_check(opt, std::cout);
    if (synth->parsed()) return atobs::cli::run_synth(opt, std::cout);
    if (simulate->parsed()) return atobs::cli::run_simulate(opt, std::cout);
    if (consensus->parsed()) return atobs::cli::run_consensus(opt, std::cout);
    if (repro->parsed()) return atobs::cli::run_repro_example(opt, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return atobs::cli::kExitConfig;
  }
  return atobs::cli::kExitConfig;
}
