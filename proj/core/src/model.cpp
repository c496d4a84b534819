#include "fw/model.hpp"

#include <cmath>
#include <string>

namespace fw {

const char* to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::CnnSmall: return "cnn_small";
    case EncoderKind::Mlp: return "mlp";
    case EncoderKind::Identity: return "identity";
  }
  return "?";
}

const char* to_string(Binding b) {
  return b == Binding::Hebb ? "hebb" : "gradmap";
}

const char* to_string(Placement p) {
  switch (p) {
    case Placement::FcLayer: return "fc_layer";
    case Placement::SoftmaxOnlyFast: return "softmax_only_fast";
    case Placement::SoftmaxFastAndSlow: return "softmax_fast_and_slow";
    case Placement::FcAndSoftmax: return "fc_and_softmax";
  }
  return "?";
}

EncoderKind encoder_from_string(const std::string& s) {
  if (s == "cnn_small") return EncoderKind::CnnSmall;
  if (s == "mlp") return EncoderKind::Mlp;
  if (s == "identity") return EncoderKind::Identity;
  throw ConfigError("unknown encoder '" + s + "'");
}

Binding binding_from_string(const std::string& s) {
  if (s == "hebb") return Binding::Hebb;
  if (s == "gradmap") return Binding::GradMap;
  throw ConfigError("unknown binding '" + s + "'");
}

Placement placement_from_string(const std::string& s) {
  if (s == "fc_layer") return Placement::FcLayer;
  if (s == "softmax_only_fast") return Placement::SoftmaxOnlyFast;
  if (s == "softmax_fast_and_slow") return Placement::SoftmaxFastAndSlow;
  if (s == "fc_and_softmax") return Placement::FcAndSoftmax;
  throw ConfigError("unknown placement '" + s + "'");
}

bool placement_uses_fc_memory(Placement p) {
  return p == Placement::FcLayer || p == Placement::FcAndSoftmax;
}

bool placement_uses_softmax_memory(Placement p) {
  return p == Placement::SoftmaxOnlyFast || p == Placement::SoftmaxFastAndSlow ||
         p == Placement::FcAndSoftmax;
}

void ModelSpec::validate() const {
  if (n_way < 2) throw ConfigError("model: n_way must be at least 2");
  if (k_shot < 1) throw ConfigError("model: k_shot must be at least 1");
  if (d_l == 0) throw ConfigError("model: d_l must be positive");
  if (filters == 0) throw ConfigError("model: filters must be positive");
  if (mlp_width == 0) throw ConfigError("model: mlp_width must be positive");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) {
    throw ConfigError("model: leaky_slope must lie in (0,1)");
  }
  if (noise_halfwidth < 0.0) throw ConfigError("model: noise_halfwidth must be non-negative");
  if (!std::isfinite(eta)) throw ConfigError("model: eta must be finite");
  if (binding == Binding::GradMap && placement != Placement::FcLayer) {
    throw ConfigError("model: the gradmap binding supports only the fc_layer placement");
  }
}

namespace {

Tensor he_dense(std::size_t in, std::size_t out, RandomStream& rs, double gain = 1.0) {
  Tensor w(Shape{in, out});
  const double std = gain * std::sqrt(2.0 / static_cast<double>(in));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rs.normal(0.0, std);
  w.set_requires_grad(true);
  return w;
}

Tensor he_conv(std::size_t co, std::size_t ci, RandomStream& rs) {
  Tensor w(Shape{co, ci, 3, 3});
  const double std = std::sqrt(2.0 / static_cast<double>(ci * 9));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rs.normal(0.0, std);
  w.set_requires_grad(true);
  return w;
}

Tensor zero_bias(std::size_t n) {
  Tensor b(Shape{n});
  b.set_requires_grad(true);
  return b;
}

}  // namespace

namespace detail_model {

Tensor EncoderNet::forward(const Tensor& x) const {
  if (!x.defined()) throw ContractError("encoder: undefined input");
  if (x.shape() != input_shape) {
    throw ShapeError("encoder: input " + shape_str(x.shape()) + " does not match expected " +
                     shape_str(input_shape));
  }
  switch (kind) {
    case EncoderKind::Identity:
      return x;
    case EncoderKind::Mlp:
      return leaky_relu(dense(x, fc_w, fc_b), slope);
    case EncoderKind::CnnSmall: {
      Tensor h = x;
      for (const auto& blk : convs) {
        h = maxpool2x2(leaky_relu(conv2d(h, blk.w, blk.b, 1), slope));
      }
      return flatten(h);
    }
  }
  throw ContractError("encoder: unknown kind");
}

Tensor FastSlowLayer::forward(const Tensor& h) const {
  if (!use_slow && !use_fast) {
    throw ContractError("layer: both the slow and fast paths are disabled");
  }
  Tensor acc;
  if (use_slow) {
    Tensor a = dense(h, w, b);
    acc = identity_act ? a : leaky_relu(a, slope);
  }
  if (use_fast) {
    Tensor f = mem.read(h);
    if (!identity_act) f = leaky_relu(f, slope);
    acc = acc.defined() ? add(acc, f) : f;
  }
  return acc;
}

Tensor GradMapper::apply(const Tensor& grad_matrix) const {
  if (!grad_matrix.defined() || grad_matrix.rank() != 2) {
    throw ContractError("gradmap: rank-2 gradient matrix required");
  }
  const std::size_t n = grad_matrix.size();
  Tensor h = reshape(grad_matrix, Shape{n, 1});
  h = leaky_relu(dense(h, w1, b1), slope);
  h = leaky_relu(dense(h, w2, b2), slope);
  h = dense(h, w3, b3);
  return reshape(h, grad_matrix.shape());
}

}  // namespace detail_model

FastWeightModel::FastWeightModel(const ModelSpec& spec, Shape input_shape)
    : spec_(spec), input_shape_(std::move(input_shape)) {
  spec_.validate();
  RandomStream init(derive_seed(spec_.seed, "init"));
  const auto nway = static_cast<std::size_t>(spec_.n_way);

  encoder_.kind = spec_.encoder;
  encoder_.input_shape = input_shape_;
  encoder_.slope = spec_.leaky_slope;
  switch (spec_.encoder) {
    case EncoderKind::CnnSmall: {
      if (input_shape_.size() != 3) {
        throw ConfigError("model: cnn_small encoder expects [channels,h,w] input, got " +
                          shape_str(input_shape_));
      }
      std::size_t c = input_shape_[0], h = input_shape_[1], w = input_shape_[2];
      for (int i = 0; i < 5; ++i) {
        detail_model::ConvBlock blk;
        blk.w = he_conv(spec_.filters, c, init);
        blk.b = zero_bias(spec_.filters);
        encoder_.convs.push_back(std::move(blk));
        c = spec_.filters;
        h = (h + 1) / 2;  // conv keeps the extent (pad 1), pooling halves it
        w = (w + 1) / 2;
      }
      if (h == 0 || w == 0) {
        throw ConfigError("model: input " + shape_str(input_shape_) +
                          " too small for the conv stack");
      }
      encoder_.out_dim = spec_.filters * h * w;
      break;
    }
    case EncoderKind::Mlp: {
      if (input_shape_.size() != 1) {
        throw ConfigError("model: mlp encoder expects rank-1 input, got " +
                          shape_str(input_shape_));
      }
      encoder_.fc_w = he_dense(input_shape_[0], spec_.mlp_width, init);
      encoder_.fc_b = zero_bias(spec_.mlp_width);
      encoder_.out_dim = spec_.mlp_width;
      break;
    }
    case EncoderKind::Identity: {
      if (input_shape_.size() != 1) {
        throw ConfigError("model: identity encoder expects rank-1 input, got " +
                          shape_str(input_shape_));
      }
      encoder_.out_dim = input_shape_[0];
      break;
    }
  }

  // The FC layer exists unless the encoder is a passthrough and no memory
  // lives there; in that case queries feed the output layer directly.
  has_fc_ = placement_uses_fc_memory(spec_.placement) || spec_.encoder != EncoderKind::Identity;

  if (has_fc_) {
    fc_.use_slow = true;
    fc_.use_fast = placement_uses_fc_memory(spec_.placement);
    fc_.identity_act = false;
    fc_.slope = spec_.leaky_slope;
    fc_.w = he_dense(encoder_.out_dim, spec_.d_l, init);
    fc_.b = zero_bias(spec_.d_l);
    if (fc_.use_fast) {
      fc_.mem = LAMemory(encoder_.out_dim, spec_.d_l, spec_.eta, spec_.train_eta);
    }
  }

  const std::size_t head_in = has_fc_ ? spec_.d_l : encoder_.out_dim;
  softmax_.use_slow = spec_.placement != Placement::SoftmaxOnlyFast;
  softmax_.use_fast = placement_uses_softmax_memory(spec_.placement);
  softmax_.identity_act = true;
  softmax_.slope = spec_.leaky_slope;
  if (softmax_.use_slow) {
    softmax_.w = he_dense(head_in, nway, init);
    softmax_.b = zero_bias(nway);
  }
  if (softmax_.use_fast) {
    softmax_.mem = LAMemory(head_in, nway, spec_.eta, spec_.train_eta);
  }

  if (spec_.binding == Binding::Hebb && placement_uses_fc_memory(spec_.placement)) {
    projector_.emplace(nway, spec_.d_l, spec_.noise_halfwidth, spec_.train_projector, init);
  }

  if (spec_.binding == Binding::GradMap) {
    detail_model::GradMapper m;
    m.slope = spec_.leaky_slope;
    m.w1 = he_dense(1, 40, init);
    m.b1 = zero_bias(40);
    m.w2 = he_dense(40, 40, init);
    m.b2 = zero_bias(40);
    // Start the mapped fast weights near zero so early episodes behave like
    // the plain slow network.
    m.w3 = he_dense(40, 1, init, 0.01);
    m.b3 = zero_bias(1);
    mapper_ = std::move(m);
  }
}

void FastWeightModel::reset_memories() {
  if (fc_.use_fast) fc_.mem.reset();
  if (softmax_.use_fast) softmax_.mem.reset();
  phase_ = Phase::Fresh;
}

void FastWeightModel::describe(const std::vector<LabeledExample>& description,
                               RandomStream& noise_rs, bool training) {
  if (phase_ != Phase::Fresh) {
    throw ProtocolError("describe: called twice without reset_memories");
  }
  if (description.empty()) throw ContractError("describe: empty description");
  for (const auto& [x, y] : description) {
    if (!x.defined()) throw ContractError("describe: undefined input tensor");
    if (y < 0 || y >= spec_.n_way) {
      throw IndexError("describe: label " + std::to_string(y) + " outside 0.." +
                       std::to_string(spec_.n_way - 1));
    }
  }
  if (spec_.binding == Binding::Hebb) {
    describe_hebb(description, noise_rs, training);
  } else {
    describe_gradmap(description);
  }
  phase_ = Phase::Described;
}

void FastWeightModel::describe_hebb(const std::vector<LabeledExample>& description,
                                    RandomStream& noise_rs, bool training) {
  // Collect every key/value pair against the blank memories first, then
  // store. Keys never see partially written memories, so the final matrices
  // are sums that cannot depend on description order.
  struct Pending {
    Tensor key, value;
    LAMemory* mem;
  };
  std::vector<Pending> pending;
  pending.reserve(description.size() * 2);
  const auto nway = static_cast<std::size_t>(spec_.n_way);

  for (const auto& [x, y] : description) {
    const auto label = static_cast<std::size_t>(y);
    Tensor feat = encoder_.forward(x);
    if (fc_.use_fast) {
      Tensor value = projector_->project(label, noise_rs, training);
      pending.push_back({feat, value, &fc_.mem});
    }
    if (softmax_.use_fast) {
      Tensor key = has_fc_ ? fc_.forward(feat) : feat;
      pending.push_back({key, onehot(label, nway), &softmax_.mem});
    }
  }
  for (auto& p : pending) {
    if (spec_.truncate_through_rule) {
      p.mem->write(detach(p.key), detach(p.value));
    } else {
      p.mem->write(p.key, p.value);
    }
  }
}

void FastWeightModel::describe_gradmap(const std::vector<LabeledExample>& description) {
  // Summed gradient of the description loss with respect to the slow FC
  // weights, written as an explicit expression so that it stays on the tape:
  // for one example, d(loss)/dW = k (s .* W_out e)^T with e the softmax
  // residual and s the local activation slopes. Training therefore
  // backpropagates through the write rule itself.
  const auto nway = static_cast<std::size_t>(spec_.n_way);
  Tensor g_sum;
  for (const auto& [x, y] : description) {
    const auto label = static_cast<std::size_t>(y);
    Tensor k = encoder_.forward(x);
    Tensor z = dense(k, fc_.w, fc_.b);
    Tensor h = leaky_relu(z, spec_.leaky_slope);
    Tensor logits = dense(h, softmax_.w, softmax_.b);
    Tensor e = sub(softmax(logits), onehot(label, nway));
    Tensor back = matvec(softmax_.w, e);                      // d(loss)/dh
    Tensor d = mul(leaky_relu_prime(z, spec_.leaky_slope), back);
    Tensor gi = outer(k, d);
    g_sum = g_sum.defined() ? add(g_sum, gi) : gi;
  }
  Tensor m = mapper_->apply(g_sum);
  fc_.mem.install(spec_.truncate_through_rule ? detach(m) : m);
}

Tensor FastWeightModel::predict(const Tensor& x) const {
  if (phase_ != Phase::Described) {
    throw ProtocolError("predict: called before describe");
  }
  Tensor h = encoder_.forward(x);
  if (has_fc_) h = fc_.forward(h);
  return softmax_.forward(h);
}

Tensor FastWeightModel::encode(const Tensor& x) const { return encoder_.forward(x); }

std::vector<NamedTensor> FastWeightModel::parameters() const {
  std::vector<NamedTensor> all = state_tensors();
  std::vector<NamedTensor> out;
  for (auto& nt : all) {
    if (nt.tensor.requires_grad()) out.push_back(nt);
  }
  return out;
}

std::vector<NamedTensor> FastWeightModel::state_tensors() const {
  std::vector<NamedTensor> out;
  auto push = [&out](const std::string& name, const Tensor& t) {
    if (t.defined()) out.push_back({name, t});
  };
  for (std::size_t i = 0; i < encoder_.convs.size(); ++i) {
    push("encoder.conv" + std::to_string(i + 1) + ".w", encoder_.convs[i].w);
    push("encoder.conv" + std::to_string(i + 1) + ".b", encoder_.convs[i].b);
  }
  push("encoder.fc.w", encoder_.fc_w);
  push("encoder.fc.b", encoder_.fc_b);
  if (has_fc_) {
    push("fc.w", fc_.w);
    push("fc.b", fc_.b);
  }
  push("softmax.w", softmax_.w);
  push("softmax.b", softmax_.b);
  if (mapper_) {
    push("gradmap.l1.w", mapper_->w1);
    push("gradmap.l1.b", mapper_->b1);
    push("gradmap.l2.w", mapper_->w2);
    push("gradmap.l2.b", mapper_->b2);
    push("gradmap.l3.w", mapper_->w3);
    push("gradmap.l3.b", mapper_->b3);
  }
  if (projector_) push("projector.r", projector_->matrix());
  if (fc_.use_fast) push("fc.mem.eta", fc_.mem.learning_rate());
  if (softmax_.use_fast) push("softmax.mem.eta", softmax_.mem.learning_rate());
  return out;
}

FastWeightModel FastWeightModel::clone() const {
  FastWeightModel copy(spec_, input_shape_);
  auto src = state_tensors();
  auto dst = copy.state_tensors();
  if (src.size() != dst.size()) {
    throw ContractError("clone: state tensor lists diverged");
  }
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].name != dst[i].name || src[i].tensor.size() != dst[i].tensor.size()) {
      throw ContractError("clone: state tensor mismatch at " + src[i].name);
    }
    std::copy(src[i].tensor.data(), src[i].tensor.data() + src[i].tensor.size(),
              dst[i].tensor.data());
  }
  return copy;
}

const LAMemory* FastWeightModel::fc_memory() const {
  return fc_.use_fast ? &fc_.mem : nullptr;
}

const LAMemory* FastWeightModel::softmax_memory() const {
  return softmax_.use_fast ? &softmax_.mem : nullptr;
}

}  // namespace fw
