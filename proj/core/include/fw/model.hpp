#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fw/memory.hpp"
#include "fw/ops.hpp"
#include "fw/random.hpp"
#include "fw/tensor.hpp"

namespace fw {

enum class EncoderKind { CnnSmall, Mlp, Identity };
enum class Binding { Hebb, GradMap };
enum class Placement {
  FcLayer,            // fast weights parallel to the slow FC layer (default)
  SoftmaxOnlyFast,    // output layer is a pure memory read, no slow path
  SoftmaxFastAndSlow, // output layer sums slow logits and memory read
  FcAndSoftmax,       // memories at both the FC and the output layer
};

const char* to_string(EncoderKind k);
const char* to_string(Binding b);
const char* to_string(Placement p);
EncoderKind encoder_from_string(const std::string& s);
Binding binding_from_string(const std::string& s);
Placement placement_from_string(const std::string& s);

bool placement_uses_fc_memory(Placement p);
bool placement_uses_softmax_memory(Placement p);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct ModelSpec {
  EncoderKind encoder = EncoderKind::CnnSmall;
  Binding binding = Binding::Hebb;
  Placement placement = Placement::FcLayer;

  // Cut gradient flow through the write rule: stored keys/values (or the
  // mapped fast-weight matrix) are detached, so slow weights stop learning
  // to shape what gets written.
  bool truncate_through_rule = false;

  int n_way = 5;
  int k_shot = 1;
  std::size_t d_l = 288;        // width of the FC layer feeding the softmax
  std::size_t filters = 64;     // conv channels (CnnSmall)
  std::size_t mlp_width = 64;   // hidden width (Mlp)
  double leaky_slope = 0.2;
  double noise_halfwidth = 0.01;  // label-code perturbation during training
  double eta = 1.0;               // memory write strength
  bool train_eta = false;
  bool train_projector = false;
  std::uint64_t seed = 0;  // parameter initialization

  void validate() const;  // throws ConfigError
};

// One example in a description or query list: input tensor and local label.
using LabeledExample = std::pair<Tensor, int>;

namespace detail_model {

struct ConvBlock {
  Tensor w, b;
};

struct EncoderNet {
  EncoderKind kind = EncoderKind::Identity;
  Shape input_shape;
  std::size_t out_dim = 0;
  double slope = 0.2;
  std::vector<ConvBlock> convs;  // CnnSmall
  Tensor fc_w, fc_b;             // Mlp

  Tensor forward(const Tensor& x) const;
};

// A layer computing act(x W + b) + act(M^T x), where either path can be
// absent. The memory path has no bias and its activation matches the slow
// path's.
struct FastSlowLayer {
  bool use_slow = true;
  bool use_fast = false;
  bool identity_act = false;  // logits layers skip the nonlinearity
  double slope = 0.2;
  Tensor w, b;    // slow path, when present
  LAMemory mem;   // fast path, when present

  Tensor forward(const Tensor& h) const;
};

// Coordinate-wise map from a summed task-loss gradient to fast weights:
// each matrix entry passes through a small shared MLP (1 -> 40 -> 40 -> 1,
// leaky ReLU between layers). The output layer starts near zero so the
// memory begins as a small perturbation.
struct GradMapper {
  double slope = 0.2;
  Tensor w1, b1, w2, b2, w3, b3;

  Tensor apply(const Tensor& grad_matrix) const;
};

}  // namespace detail_model

// Two-phase episodic model. Slow weights persist across episodes and train
// by gradient descent; fast weights (memory matrices) are rebuilt from each
// episode's description in one shot and never touched by the optimizer.
//
// Protocol per episode: reset_memories() -> describe(...) once ->
// predict(...) any number of times. describe() before a reset, or predict()
// before describe(), throws ProtocolError.
class FastWeightModel {
 public:
  FastWeightModel(const ModelSpec& spec, Shape input_shape);

  FastWeightModel(const FastWeightModel&) = delete;
  FastWeightModel& operator=(const FastWeightModel&) = delete;
  FastWeightModel(FastWeightModel&&) = default;
  FastWeightModel& operator=(FastWeightModel&&) = default;

  const ModelSpec& spec() const { return spec_; }
  const Shape& input_shape() const { return input_shape_; }

  // Zeroes every memory matrix and re-arms the description phase.
  void reset_memories();

  // Consumes the episode's description: encodes each example and builds the
  // fast weights with the configured write rule. Label noise is drawn from
  // noise_rs only when training is true.
  void describe(const std::vector<LabeledExample>& description, RandomStream& noise_rs,
                bool training);

  // Logits [n_way] for one query input. Differentiable end to end, through
  // the description writes, while a tape is active.
  Tensor predict(const Tensor& x) const;

  Tensor encode(const Tensor& x) const;

  // Trainable slow parameters, in a fixed order. Fast weights are excluded
  // by construction.
  std::vector<NamedTensor> parameters() const;

  // Every persistent tensor, trainable or frozen (adds the label projector
  // and write strengths). This is what checkpoints carry.
  std::vector<NamedTensor> state_tensors() const;

  // Fresh model with identical spec and copied state. Memories start blank.
  FastWeightModel clone() const;

  bool described() const { return phase_ == Phase::Described; }

  // Introspection for tests and diagnostics.
  const LAMemory* fc_memory() const;
  const LAMemory* softmax_memory() const;
  const LabelProjector* projector() const { return projector_ ? &*projector_ : nullptr; }

 private:
  enum class Phase { Fresh, Described };

  void describe_hebb(const std::vector<LabeledExample>& description, RandomStream& noise_rs,
                     bool training);
  void describe_gradmap(const std::vector<LabeledExample>& description);

  ModelSpec spec_;
  Shape input_shape_;
  detail_model::EncoderNet encoder_;
  bool has_fc_ = true;
  detail_model::FastSlowLayer fc_;
  detail_model::FastSlowLayer softmax_;
  std::optional<LabelProjector> projector_;
  std::optional<detail_model::GradMapper> mapper_;
  Phase phase_ = Phase::Fresh;
};

}  // namespace fw
