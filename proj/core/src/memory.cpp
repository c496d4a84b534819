#include "fw/memory.hpp"

#include <cmath>
#include <string>

namespace fw {

LAMemory::LAMemory(std::size_t d_key, std::size_t d_val, double eta, bool train_eta)
    : d_key_(d_key), d_val_(d_val) {
  if (d_key == 0 || d_val == 0) {
    throw ContractError("LAMemory: dimensions must be positive, got key " +
                        std::to_string(d_key) + " value " + std::to_string(d_val));
  }
  m_ = Tensor::zeros(Shape{d_key_, d_val_});
  eta_ = Tensor::scalar(eta);
  eta_.set_requires_grad(train_eta);
}

void LAMemory::reset() {
  if (d_key_ == 0) throw ContractError("LAMemory: reset on default-constructed memory");
  m_ = Tensor::zeros(Shape{d_key_, d_val_});
  writes_ = 0;
}

void LAMemory::write(const Tensor& key, const Tensor& value) {
  if (!key.defined() || !value.defined()) {
    throw ContractError("LAMemory::write: undefined key or value");
  }
  if (key.rank() != 1 || key.size() != d_key_) {
    throw ContractError("LAMemory::write: key " + shape_str(key.shape()) +
                        " does not match memory [" + std::to_string(d_key_) + "]");
  }
  if (value.rank() != 1 || value.size() != d_val_) {
    throw ContractError("LAMemory::write: value " + shape_str(value.shape()) +
                        " does not match memory [" + std::to_string(d_val_) + "]");
  }
  m_ = add(m_, scale(outer(key, value), eta_));
  ++writes_;
}

Tensor LAMemory::read(const Tensor& query) const {
  if (!query.defined()) throw ContractError("LAMemory::read: undefined query");
  if (query.rank() != 1 || query.size() != d_key_) {
    throw ContractError("LAMemory::read: query " + shape_str(query.shape()) +
                        " does not match memory [" + std::to_string(d_key_) + "]");
  }
  // M^T q: dense with a rank-1 input computes exactly sum_i q_i M[i,:].
  return dense(query, m_);
}

void LAMemory::install(const Tensor& m) {
  if (!m.defined() || m.rank() != 2 || m.shape()[0] != d_key_ || m.shape()[1] != d_val_) {
    throw ContractError("LAMemory::install: matrix " +
                        (m.defined() ? shape_str(m.shape()) : std::string("(undefined)")) +
                        " does not match memory [" + std::to_string(d_key_) + "x" +
                        std::to_string(d_val_) + "]");
  }
  m_ = m;
  writes_ = 0;
}

LabelProjector::LabelProjector(std::size_t n_classes, std::size_t d_val,
                               double noise_halfwidth, bool trainable, RandomStream& init)
    : n_classes_(n_classes), d_val_(d_val), noise_(noise_halfwidth) {
  if (n_classes == 0 || d_val == 0) {
    throw ContractError("LabelProjector: dimensions must be positive");
  }
  if (noise_halfwidth < 0.0) {
    throw ContractError("LabelProjector: noise halfwidth must be non-negative");
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_val_));
  r_ = Tensor(Shape{n_classes_, d_val_});
  for (std::size_t i = 0; i < r_.size(); ++i) r_[i] = init.uniform(-bound, bound);
  r_.set_requires_grad(trainable);
}

Tensor LabelProjector::project(std::size_t label, RandomStream& noise_rs,
                               bool training) const {
  if (label >= n_classes_) {
    throw IndexError("LabelProjector: label " + std::to_string(label) +
                     " out of range for " + std::to_string(n_classes_) + " classes");
  }
  Tensor code = onehot(label, n_classes_);
  if (training && noise_ > 0.0) {
    for (std::size_t i = 0; i < n_classes_; ++i) code[i] += noise_rs.uniform(-noise_, noise_);
  }
  return dense(code, r_);
}

Tensor crosstalk_report(const std::vector<Tensor>& keys) {
  if (keys.empty()) throw ContractError("crosstalk_report: no keys");
  const std::size_t m = keys.size();
  const std::size_t d = keys[0].size();
  for (const auto& k : keys) {
    if (!k.defined() || k.rank() != 1 || k.size() != d) {
      throw ContractError("crosstalk_report: keys must all be rank-1 of one dimension");
    }
  }
  std::vector<std::vector<double>> unit(m, std::vector<double>(d));
  for (std::size_t i = 0; i < m; ++i) {
    double n2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) n2 += keys[i][j] * keys[i][j];
    if (n2 == 0.0) {
      throw ContractError("crosstalk_report: key " + std::to_string(i) + " has zero norm");
    }
    const double inv = 1.0 / std::sqrt(n2);
    for (std::size_t j = 0; j < d; ++j) unit[i][j] = keys[i][j] * inv;
  }
  Tensor out(Shape{m, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += unit[i][k] * unit[j][k];
      out.at2(i, j) = dot;
    }
  }
  return out;
}

}  // namespace fw
