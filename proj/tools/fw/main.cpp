#include <exception>
#include <iostream>

#include "CLI11.hpp"

#include "commands.hpp"
#include "common.hpp"
#include "fw/error.hpp"

namespace {

// 0: success. 1: runtime failure (I/O, data, divergence). 2: operator error
// (bad flags, malformed config, refused output directory).
constexpr int kRuntimeFailure = 1;
constexpr int kUsageFailure = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fast-weight metalearner: episodic training, evaluation and timing"};
  app.require_subcommand(1);

  fwcli::TrainArgs train;
  CLI::App* t = app.add_subcommand("train", "train a model from a config file");
  t->add_option("--config", train.config, "run config file")->required();
  t->add_option("--out", train.out, "output directory (overrides train.out)");
  t->add_option("--seed", train.seed, "training seed (overrides train.seed)")
      ->each([&](const std::string&) { train.seed_set = true; });
  t->add_option("--episodes", train.episodes, "episode count (overrides train.episodes)")
      ->each([&](const std::string&) { train.episodes_set = true; });
  t->add_flag("--force", train.force, "reuse an existing output directory");

  fwcli::EvalArgs eval;
  CLI::App* e = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  e->add_option("checkpoint", eval.checkpoint, "checkpoint file")->required();
  e->add_option("--config", eval.config, "config file (overrides the embedded one)");
  e->add_option("--split", eval.split, "split to evaluate: val or test");
  e->add_option("--episodes", eval.episodes, "evaluation episode count")
      ->each([&](const std::string&) { eval.episodes_set = true; });
  e->add_option("--seed", eval.seed, "evaluation seed");
  e->add_option("--out", eval.out, "record file (default: <checkpoint>.eval.json)");

  fwcli::AblateArgs ablate;
  CLI::App* a = app.add_subcommand("ablate", "train every fast-weight placement variant");
  a->add_option("--config", ablate.config, "base run config file")->required();
  a->add_option("--out", ablate.out, "output directory (overrides train.out)");
  a->add_option("--variants", ablate.variants,
                "comma-separated variant names (default: all)")
      ->delimiter(',');
  a->add_option("--seeds", ablate.seeds, "seeds per variant");
  a->add_option("--episodes", ablate.episodes, "episode count (overrides train.episodes)")
      ->each([&](const std::string&) { ablate.episodes_set = true; });
  a->add_flag("--force", ablate.force, "reuse an existing output directory");

  fwcli::BenchArgs bench;
  CLI::App* b = app.add_subcommand("bench", "per-phase wall-clock timings");
  b->add_option("--config", bench.config, "run config file")->required();
  b->add_option("--bindings", bench.bindings, "bindings to time (default: hebb,gradmap)")
      ->delimiter(',');
  b->add_option("--episodes", bench.episodes, "measured episodes per binding");
  b->add_option("--out", bench.out, "table file (default: bench.json)");

  fwcli::InspectArgs inspect;
  CLI::App* i = app.add_subcommand("inspect-data", "summarize the configured dataset");
  i->add_option("--config", inspect.config, "run config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kUsageFailure;
  }

  try {
    if (t->parsed()) fwcli::cmd_train(train);
    if (e->parsed()) fwcli::cmd_eval(eval);
    if (a->parsed()) fwcli::cmd_ablate(ablate);
    if (b->parsed()) fwcli::cmd_bench(bench);
    if (i->parsed()) fwcli::cmd_inspect_data(inspect);
    return 0;
  } catch (const fwcli::UsageError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kUsageFailure;
  } catch (const fw::ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return kUsageFailure;
  } catch (const fw::Error& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kRuntimeFailure;
  } catch (const std::exception& ex) {
    std::cerr << "unexpected error: " << ex.what() << "\n";
    return kRuntimeFailure;
  }
}
