#include <benchmark/benchmark.h>

#include <cstddef>
#include <vector>

#include "fw/memory.hpp"
#include "fw/ops.hpp"
#include "fw/tape.hpp"
#include "fw/tensor.hpp"
#include "support.hpp"

namespace {

using bench::random_tensor;
using fw::Tensor;

constexpr std::size_t kPairs = 5;  // one 5-way 1-shot description

std::vector<Tensor> make_vectors(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::vector<Tensor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_tensor({d}, seed + i));
  return out;
}

void BM_memory_write(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  fw::LAMemory mem(d, d, 1.0);
  auto keys = make_vectors(kPairs, d, 20);
  auto vals = make_vectors(kPairs, d, 40);
  for (auto _ : state) {
    mem.reset();
    for (std::size_t i = 0; i < kPairs; ++i) mem.write(keys[i], vals[i]);
    benchmark::DoNotOptimize(mem.matrix().data());
  }
}
BENCHMARK(BM_memory_write)->Arg(64)->Arg(288)->Unit(benchmark::kMicrosecond);

void BM_memory_read(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  fw::LAMemory mem(d, d, 1.0);
  auto keys = make_vectors(kPairs, d, 20);
  auto vals = make_vectors(kPairs, d, 40);
  for (std::size_t i = 0; i < kPairs; ++i) mem.write(keys[i], vals[i]);
  Tensor q = random_tensor({d}, 60);
  for (auto _ : state) {
    Tensor r = mem.read(q);
    benchmark::DoNotOptimize(r.data());
  }
}
BENCHMARK(BM_memory_read)->Arg(64)->Arg(288)->Unit(benchmark::kMicrosecond);

// Write kPairs pairs and read back under an active tape, then backpropagate
// through the reads into the keys and values. This is the gradient path a
// training step takes through the fast weights.
void BM_memory_write_read_backward(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  fw::LAMemory mem(d, d, 1.0);
  auto keys = make_vectors(kPairs, d, 20);
  auto vals = make_vectors(kPairs, d, 40);
  for (auto& k : keys) k.set_requires_grad();
  for (auto& v : vals) v.set_requires_grad();
  Tensor q = random_tensor({d}, 60);
  for (auto _ : state) {
    for (auto& k : keys) k.zero_grad();
    for (auto& v : vals) v.zero_grad();
    mem.reset();
    fw::Tape tape;
    fw::TapeScope scope(tape);
    for (std::size_t i = 0; i < kPairs; ++i) mem.write(keys[i], vals[i]);
    Tensor loss = fw::sum(mem.read(q));
    fw::backward(tape, loss);
    benchmark::DoNotOptimize(keys[0].grad());
  }
}
BENCHMARK(BM_memory_write_read_backward)->Arg(64)->Arg(288)->Unit(benchmark::kMicrosecond);

}  // namespace
