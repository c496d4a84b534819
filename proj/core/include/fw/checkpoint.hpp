#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fw/model.hpp"

namespace fw {

struct OptimizerSlot {
  std::string name;
  std::vector<double> m, v;  // first/second moment estimates
};

struct OptimizerState {
  bool present = false;
  double alpha = 0.001, beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  std::uint64_t steps = 0;
  std::vector<OptimizerSlot> slots;
};

struct StreamState {
  std::string name;
  std::uint32_t algorithm = 0;
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;
};

// Complete training state: model tensors (parameter values, label projector,
// write strengths), optimizer moments, random stream positions, episode
// counter, and the full resolved config text the run was built from. The
// binary layout is fixed field order, little-endian, no padding, so saving
// a loaded checkpoint reproduces it byte for byte.
struct Checkpoint {
  std::uint64_t episode = 0;
  double best_val_accuracy = 0.0;
  std::vector<NamedTensor> tensors;  // value snapshots, never live handles
  OptimizerState optimizer;
  std::vector<StreamState> streams;
  std::string config_text;

  std::vector<std::uint8_t> to_bytes() const;
  static Checkpoint from_bytes(const std::vector<std::uint8_t>& bytes);

  // save() writes to a temp file and renames, so a crash can leave stale
  // bytes but never a half-written checkpoint at `path`.
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace fw
