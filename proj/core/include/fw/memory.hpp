#pragma once

#include <cstddef>
#include <vector>

#include "fw/ops.hpp"
#include "fw/random.hpp"
#include "fw/tensor.hpp"

namespace fw {

// Linear associative memory. Stores key/value pairs by accumulating scaled
// outer products into a single matrix M, and retrieves by projecting a query
// through M. With mutually orthonormal keys and eta = 1 the retrieval at a
// stored key returns its value exactly; correlated keys add crosstalk from
// the other stored pairs.
class LAMemory {
 public:
  LAMemory() = default;
  LAMemory(std::size_t d_key, std::size_t d_val, double eta = 1.0, bool train_eta = false);

  std::size_t d_key() const { return d_key_; }
  std::size_t d_val() const { return d_val_; }
  std::size_t write_count() const { return writes_; }

  // M back to all zeros; forgets every stored pair.
  void reset();

  // M <- M + eta * key value^T. Differentiable through key, value and eta.
  void write(const Tensor& key, const Tensor& value);

  // value estimate M^T query. Differentiable through M (hence through every
  // write that built it) and through the query.
  Tensor read(const Tensor& query) const;

  // Replaces M wholesale. Used by learned write rules that construct the
  // fast weights in one shot rather than pair by pair.
  void install(const Tensor& m);

  const Tensor& matrix() const { return m_; }
  Tensor& learning_rate() { return eta_; }
  const Tensor& learning_rate() const { return eta_; }

 private:
  std::size_t d_key_ = 0, d_val_ = 0;
  std::size_t writes_ = 0;
  Tensor m_;    // [d_key, d_val]
  Tensor eta_;  // scalar
};

// Maps class labels to dense value vectors through a projection matrix R of
// shape [n_classes, d_val], initialized uniformly in +-1/sqrt(d_val). During
// training a small uniform perturbation is added to the one-hot encoding
// before projecting, so repeated writes of one class never store the exact
// same value twice; evaluation uses the clean one-hot.
class LabelProjector {
 public:
  LabelProjector(std::size_t n_classes, std::size_t d_val, double noise_halfwidth,
                 bool trainable, RandomStream& init);

  std::size_t n_classes() const { return n_classes_; }
  std::size_t d_val() const { return d_val_; }
  double noise_halfwidth() const { return noise_; }

  // R^T (onehot(label) + u), u ~ uniform(-noise, +noise) per component when
  // training, u = 0 otherwise.
  Tensor project(std::size_t label, RandomStream& noise_rs, bool training) const;

  Tensor& matrix() { return r_; }
  const Tensor& matrix() const { return r_; }

 private:
  std::size_t n_classes_ = 0, d_val_ = 0;
  double noise_ = 0.0;
  Tensor r_;  // [n_classes, d_val]
};

// Pairwise cosine similarities between keys: entry (i,j) is the interference
// a read at key i picks up from pair j (unit-normalized). Diagnostic only;
// works on values and never records gradients.
Tensor crosstalk_report(const std::vector<Tensor>& keys);

}  // namespace fw
