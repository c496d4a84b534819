#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fw/checkpoint.hpp"
#include "fw/episodes.hpp"
#include "fw/model.hpp"
#include "fw/random.hpp"

namespace fw {

struct AdamConfig {
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Plain Adam with bias correction. Parameters are shared tensor handles; the
// fast-weight matrices are never handed to the optimizer, so they can only
// change through the per-episode write rules.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<NamedTensor> params, AdamConfig cfg = {});

  void zero_grad();

  // One update from the gradients currently on the parameters (a missing
  // gradient buffer counts as zero). grad_scale rescales every gradient
  // first, which is how meta-batches average.
  void step(double grad_scale = 1.0);

  std::uint64_t steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<NamedTensor>& params() const { return params_; }

  OptimizerState export_state() const;
  void restore_state(const OptimizerState& st);

 private:
  AdamConfig cfg_;
  std::vector<NamedTensor> params_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t steps_ = 0;
};

struct EpisodeMetrics {
  std::uint64_t episode = 0;
  double loss = 0.0;      // summed query cross-entropy
  double accuracy = 0.0;  // correct / total queries
  double t_describe_ms = 0.0;
  double t_predict_ms = 0.0;
  double t_update_ms = 0.0;
};

using MetricsSink = std::function<void(const EpisodeMetrics&)>;

struct StepControl {
  bool zero_grad = true;
  bool apply_step = true;      // false while accumulating a meta-batch
  double grad_scale = 1.0;
  bool timings = false;        // leave the t_* fields at zero unless asked
  std::uint64_t episode_index = 0;
  std::uint64_t run_seed = 0;  // only for error messages
};

// One full training step: reset memories, describe on-tape, predict every
// query, sum the cross-entropies, backpropagate (through the write rule
// unless the model truncates it), and apply Adam.
EpisodeMetrics train_episode(FastWeightModel& model, AdamOptimizer& opt, const Episode& ep,
                             RandomStream& noise_rs, const StepControl& ctl = {});

struct EvalResult {
  double mean_accuracy = 0.0;
  double ci95 = 0.0;  // normal-approximation half width over episodes
  double mean_loss = 0.0;
  std::size_t episodes = 0;
};

// Deterministic evaluation: episode i draws from a stream derived from
// (seed, i), label noise is off, and the model is cloned so parameters
// cannot move (checksummed to make sure). Episodes may fan out across
// threads; results are position-indexed so the thread count cannot change
// the outcome. Must not run under an active gradient tape.
EvalResult evaluate(const FastWeightModel& model, const Dataset& data,
                    const std::vector<std::size_t>& classes, int n_query,
                    std::size_t episodes, std::uint64_t seed);

struct TrainRunOptions {
  std::uint64_t episodes = 1000;
  std::uint64_t eval_every = 400;    // validation cadence, in episodes
  std::uint64_t eval_episodes = 400; // validation episode count
  int n_query = 5;
  std::size_t meta_batch = 1;        // episodes averaged per optimizer step
  AdamConfig adam;
  std::uint64_t seed = 42;
  bool timings = false;
  std::string config_text;           // embedded in emitted checkpoints
};

struct TrainRunResult {
  Checkpoint best;        // highest validation accuracy seen
  Checkpoint final_state; // exactly where training stopped
  EvalResult test;        // test-split evaluation of the best checkpoint
};

// Episodic training with periodic validation and best-checkpoint tracking.
// Episodes sample from split.train; validation uses split.val (falling back
// to train-split episodes when no validation classes exist); the test split
// is touched exactly once, at the end, by the best checkpoint. Pass a resume
// checkpoint to continue a run bit-exactly: streams, optimizer moments and
// the episode counter all restore.
TrainRunResult train_run(FastWeightModel& model, const Dataset& data, const ClassSplit& split,
                         const TrainRunOptions& opts, const MetricsSink& sink = {},
                         const Checkpoint* resume = nullptr);

// Snapshot / restore plumbing shared by train_run and the CLI.
Checkpoint make_checkpoint(const FastWeightModel& model, const AdamOptimizer* opt,
                           const std::vector<std::pair<std::string, const RandomStream*>>& streams,
                           std::uint64_t episode, double best_val_accuracy,
                           const std::string& config_text);
void restore_checkpoint(const Checkpoint& ck, FastWeightModel& model, AdamOptimizer* opt,
                        const std::vector<std::pair<std::string, RandomStream*>>& streams);

struct TimingStats {
  std::string name;
  std::size_t episodes = 0;
  double describe_ms = 0.0, describe_sd = 0.0;
  double predict_ms = 0.0, predict_sd = 0.0;
  double update_ms = 0.0, update_sd = 0.0;
};

// Wall-clock per-phase cost on synthetic episodes (inputs drawn from the
// model's own input shape, labels dealt round-robin), after a warm-up that
// is excluded from the means. Uses a monotonic clock.
TimingStats timing_bench(const ModelSpec& spec, const Shape& input_shape, int n_query,
                         std::size_t warmup, std::size_t measured, std::uint64_t seed);

}  // namespace fw
