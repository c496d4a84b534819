#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "fw/config.hpp"
#include "fw/trainer.hpp"

namespace fwcli {

// Operator mistakes (bad flags, refused output directories). main() maps
// these to exit code 2, runtime failures from fw::Error to exit code 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Creates `dir` (and parents). An existing directory is refused unless
// force is set: completed runs should never be clobbered by a typo.
void claim_out_dir(const std::string& dir, bool force);

void write_text_file(const std::string& path, const std::string& content);

// One training run with its artifact set: metrics.jsonl (one JSON object
// per episode), best.ckpt, final.ckpt, and resolved.cfg. The checkpoints
// embed the config with train.out blanked, so runs that differ only in
// their output directory produce byte-identical checkpoints.
fw::TrainRunResult run_training(const fw::RunConfig& cfg, const std::string& out_dir);

// "0.8123 +/- 0.0045" style fixed-precision formatting for console tables.
std::string fmt_fixed(double v, int places);

}  // namespace fwcli
