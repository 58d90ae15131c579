#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kws/random.hpp"
#include "kws/tape.hpp"
#include "kws/tensor.hpp"

// Differentiable primitives. Each records a backward rule on the active tape
// when any input requires a gradient. Instantiated for float and double.
namespace kws::ops {

template <typename T> using TensorT = BasicTensor<T>;

/// [m x k] . [k x n] -> [m x n]
template <typename T> TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b);

template <typename T> TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b);
/// Elementwise product.
template <typename T> TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);
template <typename T> TensorT<T> scale(const TensorT<T>& a, T factor);
/// Adds a vector along the last axis of `a` (row broadcast).
template <typename T> TensorT<T> add_bias(const TensorT<T>& a, const TensorT<T>& bias);

template <typename T> TensorT<T> relu(const TensorT<T>& a);
template <typename T> TensorT<T> log(const TensorT<T>& a);
template <typename T> TensorT<T> square(const TensorT<T>& a);
template <typename T> TensorT<T> abs(const TensorT<T>& a);

/// Softmax over the last axis.
template <typename T> TensorT<T> softmax(const TensorT<T>& a);
/// Numerically stable log(softmax) over the last axis.
template <typename T> TensorT<T> log_softmax(const TensorT<T>& a);

template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, std::size_t axis);
template <typename T> TensorT<T> reshape(const TensorT<T>& a, Shape shape);
/// 2-D transpose.
template <typename T> TensorT<T> transpose(const TensorT<T>& a);
/// Half-open range [begin, end) along `axis`.
template <typename T>
TensorT<T> slice(const TensorT<T>& a, std::size_t axis, std::size_t begin, std::size_t end);

/// Mean over one axis; the axis is removed (a rank-1 input gives shape [1]).
template <typename T> TensorT<T> mean(const TensorT<T>& a, std::size_t axis);
template <typename T> TensorT<T> mean_all(const TensorT<T>& a);
template <typename T> TensorT<T> sum_all(const TensorT<T>& a);
/// Single element at a flat index, as a [1] tensor.
template <typename T> TensorT<T> pick(const TensorT<T>& a, std::size_t index);

/// Normalizes over the last axis, then applies gain and shift.
template <typename T>
TensorT<T> layer_norm(const TensorT<T>& a, const TensorT<T>& gain, const TensorT<T>& shift,
                      T eps = T(1e-5));

struct Conv2dGeometry {
  std::size_t stride_h = 2;
  std::size_t stride_w = 2;
};

/// Cross-correlation of x[C_in x H x W] with kernels[C_out x C_in x kh x kw]
/// plus bias[C_out], using "same" zero padding: the output is
/// C_out x ceil(H/stride_h) x ceil(W/stride_w). When the total padding along an
/// axis is odd, the extra row/column goes to the end.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& kernels, const TensorT<T>& bias,
                  Conv2dGeometry geometry = {});

/// Inverted dropout: zeroes entries with probability `rate` and scales the
/// survivors by 1/(1-rate). Identity when rate is 0.
template <typename T> TensorT<T> dropout(const TensorT<T>& a, double rate, Rng& rng);

/// Same-padding amounts (before, after) for one spatial axis.
struct Padding {
  std::size_t out;
  std::size_t before;
  std::size_t after;
};
Padding same_padding(std::size_t in, std::size_t kernel, std::size_t stride);

}  // namespace kws::ops
