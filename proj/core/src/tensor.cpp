#include "fw/tensor.hpp"

#include <sstream>

namespace fw {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return s.empty() ? 0 : n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : st_(std::make_shared<detail::Storage>()) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: " + std::to_string(values.size()) +
                     " values do not fill shape " + shape_str(shape));
  }
  st_->shape = std::move(shape);
  st_->data = std::move(values);
}

double& Tensor::at2(std::size_t i, std::size_t j) const {
  if (rank() != 2) throw ShapeError("at2: rank-2 tensor required, got " + shape_str(shape()));
  if (i >= shape()[0] || j >= shape()[1]) {
    throw IndexError("at2: (" + std::to_string(i) + "," + std::to_string(j) +
                     ") out of range for " + shape_str(shape()));
  }
  return st_->data[i * shape()[1] + j];
}

Tensor Tensor::clone() const {
  Tensor t(st_->shape);
  t.st_->data = st_->data;
  t.st_->requires_grad = st_->requires_grad;
  return t;
}

Tensor Tensor::detached() const {
  Tensor t(st_->shape);
  t.st_->data = st_->data;
  return t;
}

}  // namespace fw
