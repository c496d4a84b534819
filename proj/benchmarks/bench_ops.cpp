#include <benchmark/benchmark.h>

#include <cstddef>

#include "fw/ops.hpp"
#include "fw/tape.hpp"
#include "fw/tensor.hpp"
#include "support.hpp"

namespace {

using bench::random_tensor;
using fw::Tensor;

void BM_dense_forward(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  Tensor x = random_tensor({d}, 1);
  Tensor w = random_tensor({d, d}, 2);
  Tensor b = random_tensor({d}, 3);
  for (auto _ : state) {
    Tensor y = fw::dense(x, w, b);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_dense_forward)->Arg(64)->Arg(288)->Unit(benchmark::kMicrosecond);

void BM_dense_backward(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  Tensor x = random_tensor({d}, 1);
  Tensor w = random_tensor({d, d}, 2).set_requires_grad();
  Tensor b = random_tensor({d}, 3).set_requires_grad();
  for (auto _ : state) {
    w.zero_grad();
    b.zero_grad();
    fw::Tape tape;
    fw::TapeScope scope(tape);
    Tensor loss = fw::sum(fw::dense(x, w, b));
    fw::backward(tape, loss);
    benchmark::DoNotOptimize(w.grad());
  }
}
BENCHMARK(BM_dense_backward)->Arg(64)->Arg(288)->Unit(benchmark::kMicrosecond);

void BM_matmul(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  Tensor a = random_tensor({d, d}, 4);
  Tensor b = random_tensor({d, d}, 5);
  for (auto _ : state) {
    Tensor c = fw::matmul(a, b);
    benchmark::DoNotOptimize(c.data());
  }
}
BENCHMARK(BM_matmul)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_outer(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  Tensor u = random_tensor({d}, 6);
  Tensor v = random_tensor({d}, 7);
  for (auto _ : state) {
    Tensor m = fw::outer(u, v);
    benchmark::DoNotOptimize(m.data());
  }
}
BENCHMARK(BM_outer)->Arg(288)->Unit(benchmark::kMicrosecond);

void BM_conv2d_forward(benchmark::State& state) {
  const auto filters = static_cast<std::size_t>(state.range(0));
  Tensor x = random_tensor({1, 28, 28}, 8);
  Tensor w = random_tensor({filters, 1, 3, 3}, 9);
  Tensor b = random_tensor({filters}, 10);
  for (auto _ : state) {
    Tensor y = fw::conv2d(x, w, b, 1);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_conv2d_forward)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_conv2d_backward(benchmark::State& state) {
  const auto filters = static_cast<std::size_t>(state.range(0));
  Tensor x = random_tensor({1, 28, 28}, 8);
  Tensor w = random_tensor({filters, 1, 3, 3}, 9).set_requires_grad();
  Tensor b = random_tensor({filters}, 10).set_requires_grad();
  for (auto _ : state) {
    w.zero_grad();
    b.zero_grad();
    fw::Tape tape;
    fw::TapeScope scope(tape);
    Tensor loss = fw::sum(fw::conv2d(x, w, b, 1));
    fw::backward(tape, loss);
    benchmark::DoNotOptimize(w.grad());
  }
}
BENCHMARK(BM_conv2d_backward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_maxpool2x2(benchmark::State& state) {
  Tensor x = random_tensor({64, 28, 28}, 11);
  for (auto _ : state) {
    Tensor y = fw::maxpool2x2(x);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_maxpool2x2)->Unit(benchmark::kMicrosecond);

}  // namespace
