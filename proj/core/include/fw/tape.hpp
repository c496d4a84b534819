#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fw/tensor.hpp"

namespace fw {

// Dynamic gradient tape. Ops record a node per call while a tape is active;
// backward() replays the nodes in reverse. Tapes are identified by a
// process-unique uid so a tensor left over from a destroyed tape can never be
// mistaken for part of a live one.
class Tape {
 public:
  struct Node {
    const char* op;                    // static string, for diagnostics
    std::vector<std::int64_t> inputs;  // producing nodes; -1 marks a leaf
    Tensor out;                        // the value this node produced
    std::function<void()> backward;    // accumulates into the input grads
  };

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::uint64_t uid() const { return uid_; }
  std::size_t node_count() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_[i]; }

  std::int64_t record(const char* op, std::vector<std::int64_t> inputs,
                      const Tensor& out, std::function<void()> backward);

  // The innermost live TapeScope's tape on this thread, or nullptr.
  static Tape* active();

 private:
  friend class TapeScope;
  std::uint64_t uid_;
  std::vector<Node> nodes_;
};

// RAII activation. Ops only record while a scope is alive; evaluation code
// simply runs outside any scope and pays no tracking cost. Scopes nest, and
// the innermost one wins.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Zeroes the transient gradients of tape-produced values, seeds
// d(root)/d(root) = 1, and replays the tape in reverse. Gradients accumulate
// into the leaves (parameters, inputs), so calling backward twice doubles
// them; call zero_grad on the leaves between steps. The root must be a
// scalar produced on this tape.
void backward(Tape& tape, const Tensor& root);

}  // namespace fw
