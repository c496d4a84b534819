#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fwcli {

struct TrainArgs {
  std::string config;
  std::string out;               // overrides train.out when set
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::uint64_t episodes = 0;
  bool episodes_set = false;
  bool force = false;
};

struct EvalArgs {
  std::string checkpoint;
  std::string config;            // overrides the embedded config when set
  std::string split = "test";
  std::uint64_t episodes = 0;
  bool episodes_set = false;
  std::uint64_t seed = 0;
  std::string out;               // record file; defaults beside the checkpoint
};

struct AblateArgs {
  std::string config;
  std::string out;
  std::vector<std::string> variants;  // empty means the full set
  std::uint64_t seeds = 5;
  std::uint64_t episodes = 0;
  bool episodes_set = false;
  bool force = false;
};

struct BenchArgs {
  std::string config;
  std::vector<std::string> bindings = {"hebb", "gradmap"};
  std::uint64_t episodes = 100;
  std::string out = "bench.json";
};

struct InspectArgs {
  std::string config;
};

void cmd_train(const TrainArgs& args);
void cmd_eval(const EvalArgs& args);
void cmd_ablate(const AblateArgs& args);
void cmd_bench(const BenchArgs& args);
void cmd_inspect_data(const InspectArgs& args);

}  // namespace fwcli
