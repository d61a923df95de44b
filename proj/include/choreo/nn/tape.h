#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "choreo/nn/tensor.h"

namespace choreo::nn {

/// Handle to a value recorded on a tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Trainable array with its accumulated gradient.
template <typename S>
struct BasicParameter {
  std::string name;
  BasicTensor<S> value;
  BasicTensor<S> grad;

  BasicParameter() = default;
  BasicParameter(std::string n, BasicTensor<S> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(S(0)); }
};

using Parameter = BasicParameter<float>;

/// Reverse-mode record of operations. References returned by value() and grad() stay valid
/// while the tape grows. Node ids increase in execution order, so walking them
/// backwards is a valid reverse topological order; gradients accumulate additively.
template <typename S>
class BasicTape {
 public:
  using Backward = std::function<void(BasicTape&, int self)>;

  /// With `record_gradients` off no backward closures are kept (inference).
  explicit BasicTape(bool record_gradients = true) : recording_(record_gradients) {}

  /// Leaf with no gradient (data, labels).
  Var constant(BasicTensor<S> value);
  /// Leaf that receives a gradient readable via grad() after backward().
  Var variable(BasicTensor<S> value);
  /// Leaf bound to a parameter; gradients land in `param.grad`.
  Var parameter(BasicParameter<S>& param);
  /// Result of an op. The closure runs during backward() once this node has a gradient.
  Var record(BasicTensor<S> value, std::initializer_list<Var> parents, Backward backward);
  Var record(BasicTensor<S> value, const std::vector<Var>& parents, Backward backward);

  const BasicTensor<S>& value(Var v) const;
  const Shape& shape(Var v) const { return value(v).shape(); }
  /// Gradient buffer, zero-initialized on first access.
  BasicTensor<S>& grad(Var v);
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }
  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable leaf. Loss must hold one value.
  void backward(Var loss);

 private:
  struct Node {
    BasicTensor<S> value;
    BasicTensor<S> grad;
    BasicParameter<S>* param = nullptr;
    Backward backward;
    bool requires_grad = false;
    bool has_grad = false;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  bool recording_;
};

using Tape = BasicTape<float>;

}  // namespace choreo::nn
