#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace choreo::nn {

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Allocator returning 64-byte aligned storage.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename S>
using AlignedVector = std::vector<S, AlignedAllocator<S>>;

/// Dense row-major array.
template <typename S>
class BasicTensor {
 public:
  using Scalar = S;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, S fill = S(0));
  BasicTensor(Shape shape, const std::vector<S>& data);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  /// Leading dimension; rank-1 tensors count as a single row.
  int rows() const { return rank() <= 1 ? 1 : shape_[0]; }
  int cols() const { return rows() == 0 ? 0 : static_cast<int>(size() / static_cast<std::size_t>(rows())); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::span<S> values() { return data_; }
  std::span<const S> values() const { return data_; }
  AlignedVector<S>& storage() { return data_; }
  const AlignedVector<S>& storage() const { return data_; }

  S& operator[](std::size_t i) { return data_[i]; }
  const S& operator[](std::size_t i) const { return data_[i]; }
  S& at(int r, int c) { return data_[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) + static_cast<std::size_t>(c)]; }
  const S& at(int r, int c) const { return data_[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) + static_cast<std::size_t>(c)]; }

  void fill(S value);
  /// Same data, new shape of equal size. Throws ShapeError otherwise.
  void reshape(Shape shape);
  bool all_finite() const;

  template <typename T>
  BasicTensor<T> cast() const {
    return BasicTensor<T>(shape_, std::vector<T>(data_.begin(), data_.end()));
  }

  bool operator==(const BasicTensor&) const = default;

 private:
  Shape shape_;
  AlignedVector<S> data_;
};

using Tensor = BasicTensor<float>;

}  // namespace choreo::nn
