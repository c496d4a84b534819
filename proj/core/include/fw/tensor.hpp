#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fw/error.hpp"

namespace fw {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

// Value + gradient buffer shared by all Tensor handles that refer to it.
// `tape_uid`/`node` tie the value to the tape node that produced it; both are
// meaningful only while that tape is alive, and the uid check makes a stale
// association harmless (uids are never reused).
struct Storage {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // stays empty until backward touches it
  bool requires_grad = false;
  std::uint64_t tape_uid = 0;
  std::int64_t node = -1;
};

}  // namespace detail

// Dense row-major tensor of doubles. Copying a Tensor copies the handle, not
// the buffer; clone() and detached() make deep copies. Constness is shallow:
// a const Tensor still exposes mutable access to the shared buffer, the same
// way a shared_ptr<Storage> would.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : st_(std::make_shared<detail::Storage>()) {
    st_->shape = std::move(shape);
    st_->data.assign(shape_numel(st_->shape), 0.0);
  }

  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) {
    Tensor t(Shape{1});
    t.st_->data[0] = v;
    return t;
  }

  static Tensor vec(std::vector<double> values) {
    Shape s{values.size()};
    return Tensor(std::move(s), std::move(values));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.st_->data) x = v;
    return t;
  }

  bool defined() const { return static_cast<bool>(st_); }

  const Shape& shape() const { return st_->shape; }
  std::size_t rank() const { return st_->shape.size(); }
  std::size_t size() const { return st_->data.size(); }

  double* data() const { return st_->data.data(); }

  double& operator[](std::size_t i) const { return st_->data[i]; }

  // Bounds-checked element access, rank-2 only.
  double& at2(std::size_t i, std::size_t j) const;

  bool requires_grad() const { return st_ && st_->requires_grad; }
  const Tensor& set_requires_grad(bool on = true) const {
    st_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return st_ && !st_->grad.empty(); }

  // nullptr until backward (or ensure_grad) allocates the buffer.
  double* grad() const { return st_->grad.empty() ? nullptr : st_->grad.data(); }

  double* ensure_grad() const {
    if (st_->grad.empty()) st_->grad.assign(st_->data.size(), 0.0);
    return st_->grad.data();
  }

  void zero_grad() const {
    if (!st_->grad.empty()) st_->grad.assign(st_->data.size(), 0.0);
  }

  void drop_grad() const { st_->grad.clear(); }

  std::uint64_t tape_uid() const { return st_ ? st_->tape_uid : 0; }
  std::int64_t node_id() const { return st_ ? st_->node : -1; }

  // Deep copy of values; keeps requires_grad, drops any tape association and
  // gradient. Used to snapshot parameters and to clone models.
  Tensor clone() const;

  // Deep copy of values with requires_grad off. The copy is a fresh leaf, so
  // gradient flow stops here.
  Tensor detached() const;

  // Internal: shared by ops.cpp / tape.cpp. Not part of the stable surface.
  detail::Storage* storage() const { return st_.get(); }

 private:
  std::shared_ptr<detail::Storage> st_;
};

}  // namespace fw
