#include "fw/tape.hpp"

#include <atomic>

namespace fw {

namespace {
std::atomic<std::uint64_t> g_next_tape_uid{1};
thread_local Tape* g_active_tape = nullptr;
}  // namespace

Tape::Tape() : uid_(g_next_tape_uid.fetch_add(1, std::memory_order_relaxed)) {}

std::int64_t Tape::record(const char* op, std::vector<std::int64_t> inputs,
                          const Tensor& out, std::function<void()> backward) {
  nodes_.push_back(Node{op, std::move(inputs), out, std::move(backward)});
  return static_cast<std::int64_t>(nodes_.size()) - 1;
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = prev_; }

void backward(Tape& tape, const Tensor& root) {
  if (!root.defined()) throw ContractError("backward: undefined root tensor");
  if (root.size() != 1) {
    throw ContractError("backward: root must be a scalar, got " + shape_str(root.shape()));
  }
  if (root.tape_uid() != tape.uid() || root.node_id() < 0) {
    throw ContractError("backward: root was not produced on this tape");
  }
  // Tape-produced values hold transient gradients; reset the ones a previous
  // replay touched so this replay starts clean, while leaf gradients keep
  // accumulating across calls.
  for (std::size_t i = 0; i < tape.node_count(); ++i) {
    Tensor out = tape.node(i).out;
    if (out.defined()) out.zero_grad();
  }
  root.storage()->grad.assign(1, 1.0);
  for (std::size_t i = tape.node_count(); i > 0; --i) {
    const auto& n = tape.node(i - 1);
    if (n.backward) n.backward();
  }
}

}  // namespace fw
