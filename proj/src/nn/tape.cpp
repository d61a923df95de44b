#include "choreo/nn/tape.h"

#include "choreo/error.h"

namespace choreo::nn {

template <typename S>
Var BasicTape<S>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename S>
Var BasicTape<S>::constant(BasicTensor<S> value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename S>
Var BasicTape<S>::variable(BasicTensor<S> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = recording_;
  return push(std::move(n));
}

template <typename S>
Var BasicTape<S>::parameter(BasicParameter<S>& param) {
  Node n;
  n.param = &param;
  n.requires_grad = recording_;
  if (recording_ && param.grad.shape() != param.value.shape()) param.grad = BasicTensor<S>(param.value.shape());
  return push(std::move(n));
}

template <typename S>
Var BasicTape<S>::record(BasicTensor<S> value, const std::vector<Var>& parents, Backward backward) {
  Node n;
  n.value = std::move(value);
  if (recording_) {
    for (Var p : parents) n.requires_grad = n.requires_grad || requires_grad(p);
    if (n.requires_grad) n.backward = std::move(backward);
  }
  return push(std::move(n));
}

template <typename S>
Var BasicTape<S>::record(BasicTensor<S> value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::vector<Var>(parents), std::move(backward));
}

template <typename S>
const BasicTensor<S>& BasicTape<S>::value(Var v) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
  return n.param ? n.param->value : n.value;
}

template <typename S>
BasicTensor<S>& BasicTape<S>::grad(Var v) {
  Node& n = nodes_.at(static_cast<std::size_t>(v.id));
  if (n.param) {
    n.has_grad = true;
    return n.param->grad;
  }
  if (!n.has_grad) {
    n.grad = BasicTensor<S>(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

template <typename S>
void BasicTape<S>::backward(Var loss) {
  if (!recording_) throw Error("backward() on a tape that does not record gradients");
  if (value(loss).size() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_string(value(loss).shape()));
  }
  grad(loss)[0] += S(1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.has_grad && n.backward) n.backward(*this, i);
  }
}

template class BasicTape<float>;
template class BasicTape<double>;

}  // namespace choreo::nn
