#include <cmath>
#include <filesystem>
#include <iostream>

#include "json.hpp"

#include "commands.hpp"
#include "common.hpp"
#include "fw/config.hpp"
#include "fw/error.hpp"

namespace fwcli {

namespace {

struct Variant {
  const char* name;
  const char* placement;
  bool truncate;
};

// The comparison set: where the fast weights sit, and whether gradients are
// allowed to flow back through the write rule.
constexpr Variant kVariants[] = {
    {"baseline", "fc_layer", false},
    {"softmax_fast_only", "softmax_only_fast", false},
    {"softmax_fast_slow", "softmax_fast_and_slow", false},
    {"fc_and_softmax", "fc_and_softmax", false},
    {"truncated", "fc_layer", true},
};

const Variant& variant_named(const std::string& name) {
  for (const auto& v : kVariants) {
    if (name == v.name) return v;
  }
  std::string known;
  for (const auto& v : kVariants) {
    if (!known.empty()) known += ", ";
    known += v.name;
  }
  throw UsageError("unknown ablation variant '" + name + "' (known: " + known + ")");
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace

void cmd_ablate(const AblateArgs& args) {
  fw::RunConfig base = fw::RunConfig::parse_file(args.config);
  if (args.episodes_set) base.train.episodes = args.episodes;
  if (!args.out.empty()) base.train.out = args.out;
  if (args.seeds < 1) throw UsageError("--seeds must be at least 1");

  std::vector<const Variant*> chosen;
  if (args.variants.empty()) {
    for (const auto& v : kVariants) chosen.push_back(&v);
  } else {
    for (const auto& name : args.variants) chosen.push_back(&variant_named(name));
  }

  const std::string root = base.train.out;
  if (root.empty()) throw UsageError("ablate needs an output directory (train.out or --out)");
  if (std::filesystem::exists(root) && !args.force) {
    throw UsageError("output directory '" + root + "' already exists (pass --force to reuse it)");
  }
  claim_out_dir(root, /*force=*/true);

  nlohmann::ordered_json summary;
  summary["episodes"] = base.train.episodes;
  summary["seeds"] = nlohmann::ordered_json::array();
  for (std::uint64_t s = 0; s < args.seeds; ++s) summary["seeds"].push_back(base.train.seed + s);
  summary["variants"] = nlohmann::ordered_json::array();

  struct Row {
    std::string name;
    double mean, std;
    std::size_t runs;
  };
  std::vector<Row> table;

  for (const Variant* v : chosen) {
    std::vector<double> accs;
    nlohmann::ordered_json entry;
    entry["name"] = v->name;
    entry["placement"] = v->placement;
    entry["truncate_through_rule"] = v->truncate;
    entry["test_accuracy"] = nlohmann::ordered_json::array();

    for (std::uint64_t s = 0; s < args.seeds; ++s) {
      fw::RunConfig cfg = base;
      cfg.model.placement = v->placement;
      cfg.model.truncate_through_rule = v->truncate;
      cfg.train.seed = base.train.seed + s;
      const std::string run_dir =
          root + "/" + v->name + "/seed_" + std::to_string(cfg.train.seed);
      cfg.train.out = run_dir;

      std::cout << v->name << " seed " << cfg.train.seed << "... " << std::flush;
      fw::TrainRunResult r = run_training(cfg, run_dir);
      const double acc = r.test.episodes > 0 ? r.test.mean_accuracy : r.best.best_val_accuracy;
      std::cout << "test acc " << fmt_fixed(acc, 4) << "\n";
      accs.push_back(acc);
      entry["test_accuracy"].push_back(acc);
    }

    entry["mean"] = mean_of(accs);
    entry["std"] = sample_std(accs);
    summary["variants"].push_back(entry);
    table.push_back({v->name, mean_of(accs), sample_std(accs), accs.size()});
  }

  write_text_file(root + "/summary.json", summary.dump(2) + "\n");

  std::cout << "\nvariant              mean acc   std        seeds\n";
  for (const auto& row : table) {
    std::cout << row.name;
    for (std::size_t i = row.name.size(); i < 21; ++i) std::cout << ' ';
    std::cout << fmt_fixed(row.mean, 4) << "     " << fmt_fixed(row.std, 4) << "     "
              << row.runs << "\n";
  }
  std::cout << "summary: " << root << "/summary.json\n";
}

}  // namespace fwcli
