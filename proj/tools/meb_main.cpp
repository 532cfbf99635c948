// Command-line front-end for the synthetic domain-adaptation experiments:
// gen / pretrain / adapt / eval / sweep, all driven by one config file.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "meb/common.hpp"
#include "meb/config.hpp"
#include "meb/runner.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_override;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config file (.cfg or JSON)")
      ->required();
  cmd->add_option("--out", args.out_override, "override the output directory");
  cmd->add_option("--seed", args.seed, "override the experiment seed")
      ->each([&args](const std::string&) { args.seed_set = true; });
}

meb::cfg::ExperimentConfig resolve(const CommonArgs& args) {
  meb::cfg::ExperimentConfig cfg = meb::cfg::load_config(args.config_path);
  if (!args.out_override.empty()) cfg.out = args.out_override;
  if (args.seed_set) {
    cfg.seed = args.seed;
    cfg.generator.seed = args.seed;
    cfg.pretrain.seed = args.seed;
    cfg.adapt.seed = args.seed;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multiple-expert mutual learning on a synthetic domain-shift benchmark"};
  app.set_version_flag("--version", meb::run::version_string());
  app.require_subcommand(1);

  CommonArgs gen_args, pre_args, adapt_args, eval_args, sweep_args;
  std::string ablation;
  bool dump_clusters = false;
  std::vector<std::string> stems;
  int parallel = 1;

  CLI::App* gen = app.add_subcommand("gen", "generate the source/target benchmark pair");
  add_common(gen, gen_args);

  CLI::App* pretrain =
      app.add_subcommand("pretrain", "train every expert on the labelled source split");
  add_common(pretrain, pre_args);

  CLI::App* adapt =
      app.add_subcommand("adapt", "co-adapt pretrained experts on the unlabelled target");
  add_common(adapt, adapt_args);
  adapt->add_option("--ablation", ablation,
                    "disable one mechanism (no_ema, no_mid, no_mtri, no_ar, "
                    "voting_only, baseline_ensemble)");
  adapt->add_flag("--dump-clusters", dump_clusters,
                  "write per-epoch pseudo-label assignments to clusters.csv");

  CLI::App* eval =
      app.add_subcommand("eval", "evaluate checkpoints on the target query/gallery");
  add_common(eval, eval_args);
  eval->add_option("checkpoints", stems,
                   "checkpoint stems (default: the run's pretrained experts)");

  CLI::App* sweep = app.add_subcommand(
      "sweep", "run every variant over three seeds and tabulate the medians");
  add_common(sweep, sweep_args);
  sweep->add_option("--parallel", parallel, "worker threads for independent runs")
      ->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      meb::run::cmd_gen(resolve(gen_args), std::cout);
    } else if (pretrain->parsed()) {
      meb::run::cmd_pretrain(resolve(pre_args), {}, std::cout);
    } else if (adapt->parsed()) {
      meb::cfg::ExperimentConfig cfg = resolve(adapt_args);
      if (!ablation.empty()) meb::cfg::set_ablation(cfg.adapt, ablation);
      meb::run::RunOptions opts;
      opts.dump_clusters = dump_clusters;
      meb::run::cmd_adapt(cfg, opts, std::cout);
    } else if (eval->parsed()) {
      meb::run::cmd_eval(resolve(eval_args), stems, {}, std::cout);
    } else if (sweep->parsed()) {
      meb::run::SweepOptions opts;
      opts.parallel = parallel;
      meb::run::cmd_sweep(resolve(sweep_args), opts, std::cout);
    }
  } catch (const meb::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
