#include <filesystem>
#include <iostream>

#include "commands.hpp"
#include "common.hpp"
#include "fw/config.hpp"
#include "fw/error.hpp"

namespace fwcli {

void cmd_train(const TrainArgs& args) {
  fw::RunConfig cfg = fw::RunConfig::parse_file(args.config);
  if (args.seed_set) cfg.train.seed = args.seed;
  if (args.episodes_set) cfg.train.episodes = args.episodes;
  if (!args.out.empty()) cfg.train.out = args.out;
  cfg.validate();

  const std::string out = cfg.train.out;
  if (out.empty()) throw UsageError("train needs an output directory (train.out or --out)");
  if (std::filesystem::exists(out) && !args.force) {
    throw UsageError("output directory '" + out + "' already exists (pass --force to reuse it)");
  }

  fw::TrainRunResult r = run_training(cfg, out);

  std::cout << "trained " << cfg.train.episodes << " episodes (seed " << cfg.train.seed << ")\n"
            << "best validation accuracy: " << fmt_fixed(r.best.best_val_accuracy, 4)
            << " at episode " << r.best.episode << "\n";
  if (r.test.episodes > 0) {
    std::cout << "test accuracy: " << fmt_fixed(r.test.mean_accuracy, 4) << " +/- "
              << fmt_fixed(r.test.ci95, 4) << " (95% CI over " << r.test.episodes
              << " episodes)\n";
  } else {
    std::cout << "test accuracy: not evaluated (no test split or eval_episodes = 0)\n";
  }
  std::cout << "artifacts: " << out << "\n";
}

}  // namespace fwcli
