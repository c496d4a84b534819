#pragma once

#include <cstdint>
#include <string>

#include "fw/episodes.hpp"
#include "fw/model.hpp"
#include "fw/trainer.hpp"

namespace fw {

// Name of the environment variable consulted for data.root when the config
// leaves it empty. A root set in the config always wins.
inline constexpr const char* kDataRootEnvVar = "FW_DATA_ROOT";

enum class DataKind { Omniglot, SynthOrthogonal, SynthCluster, SavedVectors };

const char* to_string(DataKind k);
DataKind data_kind_from_string(const std::string& s);

// Complete declarative run description. Parsed from a flat "section.key =
// value" text format; unknown keys are rejected with their line number, and
// canonical_text() emits every effective value (defaults included) so a
// resolved snapshot can replay the run without the original file.
struct RunConfig {
  struct Model {
    std::string encoder = "cnn_small";
    std::string binding = "hebb";
    std::string placement = "fc_layer";
    bool truncate_through_rule = false;
    int n_way = 5;
    int k_shot = 1;
    std::uint64_t d_l = 288;
    std::uint64_t filters = 64;
    std::uint64_t mlp_width = 64;
    double leaky_slope = 0.2;
    double noise_halfwidth = 0.01;
    double eta = 1.0;
    bool train_eta = false;
    bool train_projector = false;
  } model;

  struct Data {
    std::string kind = "omniglot";
    std::string root;  // directory (omniglot) or file (saved vectors)
    std::uint64_t resize = 28;
    bool augment_rotations = true;
    std::uint64_t train_classes = 1200;
    std::uint64_t val_classes = 0;
    std::uint64_t split_seed = 0;
    // synthetic generators
    std::uint64_t classes = 32;
    std::uint64_t dim = 32;
    std::uint64_t per_class = 20;
    double sigma = 0.05;
    double scale = 3.0;
    double separation = 0.5;
    std::uint64_t seed = 7;
    // vector-dataset split sizes; zero means proportional defaults
    std::uint64_t split_train = 0;
    std::uint64_t split_val = 0;
    std::uint64_t split_test = 0;
  } data;

  struct Train {
    std::uint64_t episodes = 1000;
    std::uint64_t eval_every = 400;
    std::uint64_t eval_episodes = 400;
    int n_query = 5;
    std::uint64_t meta_batch = 1;
    double adam_alpha = 0.001;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 42;
    bool timings = false;
    std::string out;
  } train;

  static RunConfig parse_text(const std::string& text);
  static RunConfig parse_file(const std::string& path);

  // Every key in sorted order, one per line. parse_text(canonical_text())
  // reproduces the config exactly.
  std::string canonical_text() const;

  void validate() const;  // throws ConfigError

  ModelSpec model_spec() const;
  AdamConfig adam_config() const;
  TrainRunOptions train_options() const;  // config_text filled with canonical_text()

  // Input tensor shape the configured dataset produces.
  Shape input_shape() const;
};

struct DataBundle {
  Dataset data;
  ClassSplit split;
};

// Materializes the configured dataset and its class split. Resolves
// data.root against the environment variable when empty; a missing root or
// malformed dataset throws (ConfigError / IngestError / IntegrityError).
DataBundle build_data(const RunConfig& cfg);

}  // namespace fw
