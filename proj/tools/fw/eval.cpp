#include <iostream>

#include "json.hpp"

#include "commands.hpp"
#include "common.hpp"
#include "fw/checkpoint.hpp"
#include "fw/config.hpp"
#include "fw/error.hpp"
#include "fw/trainer.hpp"

namespace fwcli {

void cmd_eval(const EvalArgs& args) {
  if (args.split != "val" && args.split != "test") {
    throw UsageError("--split must be 'val' or 'test', got '" + args.split + "'");
  }

  fw::Checkpoint ck = fw::Checkpoint::load(args.checkpoint);

  // The checkpoint replays its own run; an explicit --config wins, which is
  // how a checkpoint moves to a machine with a different dataset root.
  fw::RunConfig cfg = args.config.empty() ? fw::RunConfig::parse_text(ck.config_text)
                                          : fw::RunConfig::parse_file(args.config);
  cfg.validate();

  const std::uint64_t episodes = args.episodes_set ? args.episodes : cfg.train.eval_episodes;
  if (episodes == 0) throw UsageError("eval needs a positive --episodes count");

  fw::DataBundle bundle = fw::build_data(cfg);
  fw::FastWeightModel model(cfg.model_spec(), bundle.data.input_shape());
  fw::restore_checkpoint(ck, model, nullptr, {});

  const auto& classes = args.split == "val" ? bundle.split.val : bundle.split.test;
  if (classes.empty()) {
    throw fw::SamplingError("the '" + args.split + "' split holds no classes");
  }

  fw::EvalResult r =
      fw::evaluate(model, bundle.data, classes, cfg.train.n_query, episodes, args.seed);

  std::cout << args.split << " accuracy: " << fmt_fixed(r.mean_accuracy, 4) << " +/- "
            << fmt_fixed(r.ci95, 4) << " (95% CI over " << r.episodes << " episodes, seed "
            << args.seed << ")\n"
            << "mean loss: " << fmt_fixed(r.mean_loss, 4) << "\n";

  nlohmann::ordered_json record;
  record["checkpoint"] = args.checkpoint;
  record["checkpoint_episode"] = ck.episode;
  record["split"] = args.split;
  record["episodes"] = r.episodes;
  record["seed"] = args.seed;
  record["n_way"] = cfg.model.n_way;
  record["k_shot"] = cfg.model.k_shot;
  record["mean_accuracy"] = r.mean_accuracy;
  record["ci95"] = r.ci95;
  record["mean_loss"] = r.mean_loss;

  const std::string out = args.out.empty() ? args.checkpoint + ".eval.json" : args.out;
  write_text_file(out, record.dump(2) + "\n");
  std::cout << "record: " << out << "\n";
}

}  // namespace fwcli
