#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <deque>
#include <vector>

#include "lagscope/autodiff/tensor.hpp"

namespace lagscope::ad {

/// A named trainable tensor owned by a model. Gradients live on the tape that
/// used it, so a model can be evaluated on several tapes concurrently.
struct Parameter {
  std::string name;
  Tensor value;
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; only valid while the
/// tape is alive.
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Computation tape for reverse-mode differentiation. Nodes are recorded in
/// topological order as ops execute; backward() walks them in reverse.
/// A tape is a single-threaded session.
class Tape {
 public:
  enum class ParameterMode { trainable, frozen };

  /// Receives the tape and the id of the node whose gradient is ready.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  explicit Tape(ParameterMode mode = ParameterMode::trainable);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Binds a model parameter. In frozen mode this records a constant, so no
  /// gradient can reach the parameter.
  Var parameter(const Parameter& p);
  /// Copy of v's value with no path back to v.
  Var detach(Var v);

  /// Records an op output. If no input requires a gradient the backward rule
  /// is dropped and the output is a constant.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  /// Clears previous gradients, seeds d(loss)/d(loss) = 1 and propagates.
  /// Calling it twice yields identical gradients.
  void backward(Var loss);

  /// Gradient of the last backward() w.r.t. v; zeros if v is off the path.
  Tensor gradient(Var v) const;
  /// Sum of gradients over every binding of p on this tape.
  Tensor parameter_gradient(const Parameter& p) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  ParameterMode mode() const noexcept { return mode_; }

  /// When enabled, piecewise ops (relu, abs) fold the sign pattern of their
  /// inputs into branch_signature(). Two evaluations with different
  /// signatures lie on different linear pieces.
  void track_branches(bool on) noexcept { track_branches_ = on; }
  bool tracking_branches() const noexcept { return track_branches_; }
  void note_branches(const Tensor& input);
  std::uint64_t branch_signature() const noexcept { return branch_signature_; }

  // Access for backward rules.
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient accumulator for an input, allocated on first use; nullptr when
  /// the input does not require a gradient.
  Tensor* grad_sink(std::size_t id);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    const Parameter* parameter = nullptr;
    bool requires_grad = false;
  };

  Var push(Node node);

  std::deque<Node> nodes_;  // stable addresses: value() references survive push()
  ParameterMode mode_;
  bool track_branches_ = false;
  std::uint64_t branch_signature_ = 0xcbf29ce484222325ULL;
};

}  // namespace lagscope::ad
