#include "lagscope/autodiff/tape.hpp"

#include "lagscope/error.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace lagscope::ad {

namespace {

// Tensors of a few hundred KB are created and freed per op. Above glibc's
// default mmap threshold each one costs a map/unmap and fresh page faults.
void keep_large_blocks_on_heap() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
    mallopt(M_TOP_PAD, 64 * 1024 * 1024);
    return true;
  }();
  (void)done;
#endif
}

}  // namespace

Tape::Tape(ParameterMode mode) : mode_(mode) { keep_large_blocks_on_heap(); }

void Tape::note_branches(const Tensor& input) {
  if (!track_branches_) return;
  for (double v : input.values()) {
    const std::uint64_t side = v > 0.0 ? 1 : (v < 0.0 ? 2 : 3);
    branch_signature_ = (branch_signature_ ^ side) * 0x100000001b3ULL;
  }
}

Tape& Var::tape() const {
  if (!tape_) throw Error("var: not bound to a tape");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value(id_); }

bool Var::requires_grad() const { return tape().requires_grad(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(const Parameter& p) {
  Node n;
  n.value = p.value;
  if (mode_ == ParameterMode::trainable) {
    n.requires_grad = true;
    n.parameter = &p;
  }
  return push(std::move(n));
}

Var Tape::detach(Var v) { return constant(v.value()); }

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape_ != this) throw Error("tape: input recorded on a different tape");
    needs = needs || nodes_[v.id_].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  if (needs) {
    n.requires_grad = true;
    n.backward = std::move(backward);
  }
  return push(std::move(n));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape_ != this) throw Error("tape: input recorded on a different tape");
    needs = needs || nodes_[v.id_].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  if (needs) {
    n.requires_grad = true;
    n.backward = std::move(backward);
  }
  return push(std::move(n));
}

Tensor* Tape::grad_sink(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return &n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw Error("backward: loss recorded on a different tape");
  if (nodes_.empty()) throw Error("backward: empty tape");
  if (nodes_[loss.id_].value.size() != 1) {
    throw Error("backward: loss must be scalar, got shape " +
                shape_string(nodes_[loss.id_].value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id_].requires_grad) return;

  nodes_[loss.id_].grad = Tensor(nodes_[loss.id_].value.shape(), 1.0);
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
}

Tensor Tape::gradient(Var v) const {
  const Node& n = nodes_.at(v.id_);
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

Tensor Tape::parameter_gradient(const Parameter& p) const {
  Tensor out(p.value.shape(), 0.0);
  for (const Node& n : nodes_) {
    if (n.parameter != &p || n.grad.empty()) continue;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += n.grad[i];
  }
  return out;
}

}  // namespace lagscope::ad
