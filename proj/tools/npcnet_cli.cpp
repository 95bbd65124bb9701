#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "npcnet/pipeline.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::optional<int> seeds;
  std::optional<double> alpha;
  std::optional<std::string> out;
  bool quiet = false;
};

void add_common(CLI::App* cmd, CliOptions& opt) {
  cmd->add_option("--config", opt.config_path, "run configuration JSON")
      ->envname("NPCNET_CONFIG")
      ->required();
  cmd->add_option("--seeds", opt.seeds, "run seeds 1..N instead of the configured list");
  cmd->add_option("--alpha", opt.alpha, "significance level override");
  cmd->add_option("--out", opt.out, "output directory override");
  cmd->add_flag("--quiet", opt.quiet, "suppress progress output");
}

npcnet::RunConfig resolve(const CliOptions& opt) {
  npcnet::RunConfig cfg = npcnet::load_run_config(opt.config_path);
  if (opt.seeds) {
    if (*opt.seeds < 1) throw npcnet::ConfigError("--seeds must be at least 1");
    cfg.seeds.clear();
    for (int s = 1; s <= *opt.seeds; ++s) cfg.seeds.push_back(s);
  }
  if (opt.alpha) {
    if (*opt.alpha <= 0.0 || *opt.alpha >= 1.0) {
      throw npcnet::ConfigError("--alpha must be in (0, 1)");
    }
    cfg.alpha = *opt.alpha;
  }
  if (opt.out) cfg.output_dir = *opt.out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"navigator-driven pseudo-text phenotype pipeline"};
  app.require_subcommand(1);

  CliOptions opt;
  CLI::App* fit = app.add_subcommand("fit", "train models over the configured seeds");
  CLI::App* assign = app.add_subcommand("assign", "label episodes with a trained model");
  CLI::App* evaluate =
      app.add_subcommand("evaluate", "cluster metrics, trajectory grid, survival");
  CLI::App* treatment =
      app.add_subcommand("treatment", "per-phenotype treatment effect table");
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic cohort");
  CLI::App* check = app.add_subcommand("check", "numeric self-test");
  for (CLI::App* cmd : {fit, assign, evaluate, treatment, synth, check}) {
    add_common(cmd, opt);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const npcnet::RunConfig cfg = resolve(opt);
    if (fit->parsed()) {
      npcnet::cmd_fit(cfg, opt.quiet);
    } else if (assign->parsed()) {
      npcnet::cmd_assign(cfg, opt.quiet);
    } else if (evaluate->parsed()) {
      npcnet::cmd_evaluate(cfg, opt.quiet);
    } else if (treatment->parsed()) {
      npcnet::cmd_treatment(cfg, opt.quiet);
    } else if (synth->parsed()) {
      npcnet::cmd_synth(cfg, opt.quiet);
    } else if (check->parsed()) {
      if (!npcnet::cmd_check(cfg, opt.quiet)) return 1;
    }
  } catch (const npcnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
