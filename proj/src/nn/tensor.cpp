#include "choreo/nn/tensor.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "choreo/error.h"

namespace choreo::nn {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

template <typename S>
BasicTensor<S>::BasicTensor(Shape shape, S fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

template <typename S>
BasicTensor<S>::BasicTensor(Shape shape, const std::vector<S>& data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("data of length " + std::to_string(data_.size()) + " does not fit shape " + shape_string(shape_));
  }
}

template <typename S>
void BasicTensor<S>::fill(S value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename S>
void BasicTensor<S>::reshape(Shape shape) {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

template <typename S>
bool BasicTensor<S>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](S v) { return std::isfinite(v); });
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace choreo::nn
