#include <benchmark/benchmark.h>

#include <cstddef>
#include <numeric>
#include <vector>

#include "fw/episodes.hpp"
#include "fw/model.hpp"
#include "fw/random.hpp"
#include "fw/tensor.hpp"
#include "fw/trainer.hpp"
#include "support.hpp"

namespace {

using bench::random_tensor;
using fw::Tensor;

fw::ModelSpec vector_spec(fw::Binding binding) {
  fw::ModelSpec spec;
  spec.encoder = fw::EncoderKind::Mlp;
  spec.binding = binding;
  spec.placement = fw::Placement::FcLayer;
  spec.n_way = 5;
  spec.k_shot = 1;
  spec.d_l = 64;
  spec.mlp_width = 64;
  spec.seed = 7;
  return spec;
}

fw::Episode vector_episode(std::uint64_t seed) {
  fw::Dataset data = fw::make_cluster_prototypes(16, 64, 10, 0.5, 0.1, 3);
  std::vector<std::size_t> classes(data.num_classes());
  std::iota(classes.begin(), classes.end(), std::size_t{0});
  fw::RandomStream rs(seed);
  return fw::sample_episode(data, classes, 5, 1, 5, rs);
}

void BM_model_describe(benchmark::State& state, fw::Binding binding) {
  fw::FastWeightModel model(vector_spec(binding), {64});
  fw::Episode ep = vector_episode(11);
  fw::RandomStream noise(99);
  for (auto _ : state) {
    model.reset_memories();
    model.describe(ep.description, noise, false);
  }
}
BENCHMARK_CAPTURE(BM_model_describe, hebb, fw::Binding::Hebb)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_model_describe, gradmap, fw::Binding::GradMap)->Unit(benchmark::kMicrosecond);

void BM_model_predict(benchmark::State& state, fw::Binding binding) {
  fw::FastWeightModel model(vector_spec(binding), {64});
  fw::Episode ep = vector_episode(11);
  fw::RandomStream noise(99);
  model.reset_memories();
  model.describe(ep.description, noise, false);
  const Tensor& x = ep.queries.front().first;
  for (auto _ : state) {
    Tensor logits = model.predict(x);
    benchmark::DoNotOptimize(logits.data());
  }
}
BENCHMARK_CAPTURE(BM_model_predict, hebb, fw::Binding::Hebb)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_model_predict, gradmap, fw::Binding::GradMap)->Unit(benchmark::kMicrosecond);

// Conv encoder path on image-shaped input, description phase only.
void BM_model_describe_conv(benchmark::State& state) {
  fw::ModelSpec spec;
  spec.encoder = fw::EncoderKind::CnnSmall;
  spec.binding = fw::Binding::Hebb;
  spec.n_way = 5;
  spec.k_shot = 1;
  spec.d_l = 64;
  spec.filters = 16;
  spec.seed = 7;
  fw::FastWeightModel model(spec, {1, 28, 28});
  std::vector<fw::LabeledExample> description;
  for (int c = 0; c < 5; ++c) {
    description.emplace_back(random_tensor({1, 28, 28}, 100 + static_cast<std::uint64_t>(c)), c);
  }
  fw::RandomStream noise(99);
  for (auto _ : state) {
    model.reset_memories();
    model.describe(description, noise, false);
  }
}
BENCHMARK(BM_model_describe_conv)->Unit(benchmark::kMillisecond);

// Full training step: describe and predict on tape, backward, Adam update.
void BM_train_episode(benchmark::State& state, fw::Binding binding) {
  fw::FastWeightModel model(vector_spec(binding), {64});
  fw::AdamOptimizer opt(model.parameters());
  fw::Episode ep = vector_episode(11);
  fw::RandomStream noise(99);
  for (auto _ : state) {
    fw::EpisodeMetrics m = fw::train_episode(model, opt, ep, noise);
    benchmark::DoNotOptimize(m.loss);
  }
}
BENCHMARK_CAPTURE(BM_train_episode, hebb, fw::Binding::Hebb)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_train_episode, gradmap, fw::Binding::GradMap)->Unit(benchmark::kMillisecond);

}  // namespace
