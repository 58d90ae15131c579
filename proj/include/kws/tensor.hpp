#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kws/errors.hpp"

namespace kws {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

/// Dense row-major tensor with an optional gradient buffer.
///
/// Copies are shallow: two BasicTensor objects may share storage, which is
/// how the tape refers back to values. Use clone() for a deep copy.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, bool requires_grad = false)
      : impl_(std::make_shared<Storage>()) {
    validate(shape);
    impl_->values.assign(shape_numel(shape), T{0});
    impl_->shape = std::move(shape);
    impl_->requires_grad = requires_grad;
  }

  BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : impl_(std::make_shared<Storage>()) {
    validate(shape);
    if (values.size() != shape_numel(shape)) {
      throw ShapeError("tensor: " + std::to_string(values.size()) +
                       " values do not fill shape " + shape_str(shape));
    }
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
    impl_->requires_grad = requires_grad;
  }

  static BasicTensor full(Shape shape, T value) {
    BasicTensor t(std::move(shape));
    std::fill(t.impl_->values.begin(), t.impl_->values.end(), value);
    return t;
  }

  static BasicTensor scalar(T value) { return BasicTensor(Shape{1}, std::vector<T>{value}); }

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const {
    if (axis >= rank()) {
      throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                       shape_str(shape()));
    }
    return impl_->shape[axis];
  }
  std::size_t numel() const { return impl_->values.size(); }

  std::span<const T> values() const { return impl_->values; }
  std::span<T> mutable_values() { return impl_->values; }
  T operator[](std::size_t i) const { return impl_->values[i]; }
  T item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return impl_->values[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) const { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  /// Gradient buffer, allocated as zeros on first access. Handles share
  /// storage, so this is available through const handles too.
  std::span<T> mutable_grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(numel(), T{0});
    return impl_->grad;
  }
  void zero_grad() const { impl_->grad.assign(numel(), T{0}); }
  void drop_grad() { impl_->grad.clear(); }

  /// Deep copy of values and flags; the gradient is not copied.
  BasicTensor clone() const {
    BasicTensor t(shape(), impl_->values, requires_grad());
    return t;
  }

  bool same_storage(const BasicTensor& other) const { return impl_ == other.impl_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;
    bool requires_grad = false;
  };

  static void validate(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor: rank must be at least 1");
    for (std::size_t d : shape) {
      if (d == 0) throw ShapeError("tensor: zero extent in " + shape_str(shape));
    }
  }

  std::shared_ptr<Storage> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename To, typename From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& t) {
  std::vector<To> out(t.values().begin(), t.values().end());
  return BasicTensor<To>(t.shape(), std::move(out), t.requires_grad());
}

template <typename T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;
};

}  // namespace kws
