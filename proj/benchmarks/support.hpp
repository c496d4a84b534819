#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>

#include "fw/random.hpp"
#include "fw/tensor.hpp"

namespace bench {

inline fw::Tensor random_tensor(fw::Shape shape, std::uint64_t seed) {
  fw::RandomStream rs(seed);
  fw::Tensor t(std::move(shape));
  double* p = t.data();
  for (std::size_t i = 0; i < t.size(); ++i) p[i] = rs.normal(0.0, 0.1);
  return t;
}

}  // namespace bench
