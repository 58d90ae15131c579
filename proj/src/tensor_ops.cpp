#include <cmath>
#include <limits>
#include <string>

#include "kws/ops.hpp"

namespace kws::ops {
namespace {

template <typename T>
void check_finite([[maybe_unused]] const TensorT<T>& t, [[maybe_unused]] const char* op) {
#ifndef NDEBUG
  for (T v : t.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite output");
  }
#endif
}

template <typename T, typename Fn>
void record(const char* op, std::vector<TensorT<T>> inputs, TensorT<T>& out, Fn&& fn) {
  check_finite(out, op);
  auto* tape = BasicTape<T>::active();
  if (tape == nullptr) return;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return;
  out.set_requires_grad(true);
  tape->record(op, std::move(inputs), out, std::forward<Fn>(fn));
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(s));
  }
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                     shape_str(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

// C[m x n] += A[m x k] . B[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[k x m]^T . B[k x n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x n] += A[m x k] . B[n x k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  gemm_nn(m, k, n, a, bt.data(), c);
}

template <typename T>
void accumulate(const TensorT<T>& t, std::span<const T> g) {
  if (!t.requires_grad()) return;
  auto dst = t.mutable_grad();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

template <typename T, typename Op>
TensorT<T> unary(const TensorT<T>& a, Op op) {
  TensorT<T> out(a.shape());
  auto av = a.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = op(av[i]);
  return out;
}

}  // namespace

Padding same_padding(std::size_t in, std::size_t kernel, std::size_t stride) {
  Padding p{};
  p.out = (in + stride - 1) / stride;
  const std::size_t needed = (p.out - 1) * stride + kernel;
  const std::size_t total = needed > in ? needed - in : 0;
  p.before = total / 2;
  p.after = total - p.before;
  return p;
}

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ: " + shape_str(a.shape()) + " . " +
                     shape_str(b.shape()));
  }
  TensorT<T> out({m, n});
  gemm_nn(m, k, n, a.values().data(), b.values().data(), out.mutable_values().data());
  record<T>("matmul", {a, b}, out, [a, b, m, k, n](std::span<const T> g) mutable {
    if (a.requires_grad()) gemm_nt(m, n, k, g.data(), b.values().data(), a.mutable_grad().data());
    if (b.requires_grad()) gemm_tn(k, m, n, a.values().data(), g.data(), b.mutable_grad().data());
  });
  return out;
}

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  require_same(a.shape(), b.shape(), "add");
  TensorT<T> out(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + b[i];
  record<T>("add", {a, b}, out, [a, b](std::span<const T> g) mutable {
    accumulate(a, g);
    accumulate(b, g);
  });
  return out;
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  require_same(a.shape(), b.shape(), "sub");
  TensorT<T> out(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] - b[i];
  record<T>("sub", {a, b}, out, [a, b](std::span<const T> g) mutable {
    accumulate(a, g);
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    }
  });
  return out;
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  require_same(a.shape(), b.shape(), "mul");
  TensorT<T> out(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * b[i];
  record<T>("mul", {a, b}, out, [a, b](std::span<const T> g) mutable {
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * b[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * a[i];
    }
  });
  return out;
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T factor) {
  auto out = unary(a, [factor](T v) { return v * factor; });
  record<T>("scale", {a}, out, [a, factor](std::span<const T> g) mutable {
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * factor;
  });
  return out;
}

template <typename T>
TensorT<T> add_bias(const TensorT<T>& a, const TensorT<T>& bias) {
  const std::size_t n = a.shape().back();
  if (bias.numel() != n) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match last axis of " +
                     shape_str(a.shape()));
  }
  TensorT<T> out(a.shape());
  auto o = out.mutable_values();
  const std::size_t rows = a.numel() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) o[r * n + j] = a[r * n + j] + bias[j];
  }
  record<T>("add_bias", {a, bias}, out, [a, bias, rows, n](std::span<const T> g) mutable {
    accumulate(a, g);
    if (bias.requires_grad()) {
      auto gb = bias.mutable_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
  auto out = unary(a, [](T v) { return v > T{0} ? v : T{0}; });
  record<T>("relu", {a}, out, [a](std::span<const T> g) mutable {
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (a[i] > T{0}) ga[i] += g[i];
    }
  });
  return out;
}

template <typename T>
TensorT<T> log(const TensorT<T>& a) {
  auto out = unary(a, [](T v) { return std::log(v); });
  record<T>("log", {a}, out, [a](std::span<const T> g) mutable {
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] / a[i];
  });
  return out;
}

template <typename T>
TensorT<T> square(const TensorT<T>& a) {
  auto out = unary(a, [](T v) { return v * v; });
  record<T>("square", {a}, out, [a](std::span<const T> g) mutable {
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += T{2} * a[i] * g[i];
  });
  return out;
}

template <typename T>
TensorT<T> abs(const TensorT<T>& a) {
  auto out = unary(a, [](T v) { return std::abs(v); });
  record<T>("abs", {a}, out, [a](std::span<const T> g) mutable {
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (a[i] > T{0}) {
        ga[i] += g[i];
      } else if (a[i] < T{0}) {
        ga[i] -= g[i];
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> softmax(const TensorT<T>& a) {
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.numel() / n;
  TensorT<T> out(a.shape());
  auto o = out.mutable_values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = a.values().data() + r * n;
    T* y = o.data() + r * n;
    T mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    T total{0};
    for (std::size_t j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= total;
  }
  record<T>("softmax", {a}, out, [a, out, rows, n](std::span<const T> g) mutable {
    auto ga = a.mutable_grad();
    auto y = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot{0};
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
    }
  });
  return out;
}

template <typename T>
TensorT<T> log_softmax(const TensorT<T>& a) {
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.numel() / n;
  TensorT<T> out(a.shape());
  auto o = out.mutable_values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = a.values().data() + r * n;
    T mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    T total{0};
    for (std::size_t j = 0; j < n; ++j) total += std::exp(x[j] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t j = 0; j < n; ++j) o[r * n + j] = x[j] - lse;
  }
  record<T>("log_softmax", {a}, out, [a, out, rows, n](std::span<const T> g) mutable {
    auto ga = a.mutable_grad();
    auto y = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
      T total{0};
      for (std::size_t j = 0; j < n; ++j) total += g[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        ga[r * n + j] += g[r * n + j] - std::exp(y[r * n + j]) * total;
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape shape = parts.front().shape();
  split_axis(shape, axis, "concat");
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != shape.size()) throw ShapeError("concat: rank mismatch " + shape_str(s));
    s[axis] = shape[axis];
    require_same(s, shape, "concat");
    total += p.dim(axis);
  }
  shape[axis] = total;
  TensorT<T> out(shape);
  const AxisSplit whole = split_axis(shape, axis, "concat");
  auto o = out.mutable_values();
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t len = p.dim(axis);
    for (std::size_t q = 0; q < whole.outer; ++q) {
      std::copy_n(p.values().data() + q * len * whole.inner, len * whole.inner,
                  o.data() + (q * whole.len + offset) * whole.inner);
    }
    offset += len;
  }
  record<T>("concat", parts, out, [parts, offsets, whole, axis](std::span<const T> g) mutable {
    for (std::size_t idx = 0; idx < parts.size(); ++idx) {
      auto& p = parts[idx];
      if (!p.requires_grad()) continue;
      const std::size_t len = p.dim(axis);
      auto gp = p.mutable_grad();
      for (std::size_t q = 0; q < whole.outer; ++q) {
        const T* src = g.data() + (q * whole.len + offsets[idx]) * whole.inner;
        T* dst = gp.data() + q * len * whole.inner;
        for (std::size_t i = 0; i < len * whole.inner; ++i) dst[i] += src[i];
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> reshape(const TensorT<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  TensorT<T> out(std::move(shape), std::vector<T>(a.values().begin(), a.values().end()));
  record<T>("reshape", {a}, out, [a](std::span<const T> g) mutable { accumulate(a, g); });
  return out;
}

template <typename T>
TensorT<T> transpose(const TensorT<T>& a) {
  require_rank(a.shape(), 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  TensorT<T> out({n, m});
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) o[j * m + i] = a[i * n + j];
  }
  record<T>("transpose", {a}, out, [a, m, n](std::span<const T> g) mutable {
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    }
  });
  return out;
}

template <typename T>
TensorT<T> slice(const TensorT<T>& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit s = split_axis(a.shape(), axis, "slice");
  if (begin >= end || end > s.len) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for axis " + std::to_string(axis) + " of " + shape_str(a.shape()));
  }
  Shape shape = a.shape();
  shape[axis] = end - begin;
  TensorT<T> out(shape);
  auto o = out.mutable_values();
  const std::size_t len = end - begin;
  for (std::size_t q = 0; q < s.outer; ++q) {
    std::copy_n(a.values().data() + (q * s.len + begin) * s.inner, len * s.inner,
                o.data() + q * len * s.inner);
  }
  record<T>("slice", {a}, out, [a, s, begin, len](std::span<const T> g) mutable {
    auto ga = a.mutable_grad();
    for (std::size_t q = 0; q < s.outer; ++q) {
      T* dst = ga.data() + (q * s.len + begin) * s.inner;
      const T* src = g.data() + q * len * s.inner;
      for (std::size_t i = 0; i < len * s.inner; ++i) dst[i] += src[i];
    }
  });
  return out;
}

template <typename T>
TensorT<T> mean(const TensorT<T>& a, std::size_t axis) {
  const AxisSplit s = split_axis(a.shape(), axis, "mean");
  Shape shape = a.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (shape.empty()) shape = {1};
  TensorT<T> out(shape);
  auto o = out.mutable_values();
  const T inv = T{1} / static_cast<T>(s.len);
  for (std::size_t q = 0; q < s.outer; ++q) {
    for (std::size_t l = 0; l < s.len; ++l) {
      const T* src = a.values().data() + (q * s.len + l) * s.inner;
      T* dst = o.data() + q * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  for (auto& v : o) v *= inv;
  record<T>("mean", {a}, out, [a, s, inv](std::span<const T> g) mutable {
    auto ga = a.mutable_grad();
    for (std::size_t q = 0; q < s.outer; ++q) {
      for (std::size_t l = 0; l < s.len; ++l) {
        T* dst = ga.data() + (q * s.len + l) * s.inner;
        const T* src = g.data() + q * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i] * inv;
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> sum_all(const TensorT<T>& a) {
  T total{0};
  for (T v : a.values()) total += v;
  TensorT<T> out = TensorT<T>::scalar(total);
  record<T>("sum_all", {a}, out, [a](std::span<const T> g) mutable {
    auto ga = a.mutable_grad();
    for (auto& v : ga) v += g[0];
  });
  return out;
}

template <typename T>
TensorT<T> mean_all(const TensorT<T>& a) {
  return scale(sum_all(a), T{1} / static_cast<T>(a.numel()));
}

template <typename T>
TensorT<T> pick(const TensorT<T>& a, std::size_t index) {
  if (index >= a.numel()) {
    throw ShapeError("pick: index " + std::to_string(index) + " out of range for " +
                     shape_str(a.shape()));
  }
  TensorT<T> out = TensorT<T>::scalar(a[index]);
  record<T>("pick", {a}, out, [a, index](std::span<const T> g) mutable {
    a.mutable_grad()[index] += g[0];
  });
  return out;
}

template <typename T>
TensorT<T> layer_norm(const TensorT<T>& a, const TensorT<T>& gain, const TensorT<T>& shift, T eps) {
  const std::size_t n = a.shape().back();
  if (gain.numel() != n || shift.numel() != n) {
    throw ShapeError("layer_norm: gain/shift must have " + std::to_string(n) + " entries");
  }
  const std::size_t rows = a.numel() / n;
  TensorT<T> out(a.shape());
  std::vector<T> normalized(a.numel());
  std::vector<T> inv_std(rows);
  auto o = out.mutable_values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = a.values().data() + r * n;
    T mu{0};
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<T>(n);
    T var{0};
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<T>(n);
    inv_std[r] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const T xh = (x[j] - mu) * inv_std[r];
      normalized[r * n + j] = xh;
      o[r * n + j] = xh * gain[j] + shift[j];
    }
  }
  record<T>("layer_norm", {a, gain, shift}, out,
            [a, gain, shift, normalized, inv_std, rows, n](std::span<const T> g) mutable {
              if (gain.requires_grad() || shift.requires_grad()) {
                for (std::size_t r = 0; r < rows; ++r) {
                  for (std::size_t j = 0; j < n; ++j) {
                    if (gain.requires_grad()) gain.mutable_grad()[j] += g[r * n + j] * normalized[r * n + j];
                    if (shift.requires_grad()) shift.mutable_grad()[j] += g[r * n + j];
                  }
                }
              }
              if (!a.requires_grad()) return;
              auto ga = a.mutable_grad();
              for (std::size_t r = 0; r < rows; ++r) {
                T mean_g{0}, mean_gx{0};
                for (std::size_t j = 0; j < n; ++j) {
                  const T gx = g[r * n + j] * gain[j];
                  mean_g += gx;
                  mean_gx += gx * normalized[r * n + j];
                }
                mean_g /= static_cast<T>(n);
                mean_gx /= static_cast<T>(n);
                for (std::size_t j = 0; j < n; ++j) {
                  const T gx = g[r * n + j] * gain[j];
                  ga[r * n + j] += inv_std[r] * (gx - mean_g - normalized[r * n + j] * mean_gx);
                }
              }
            });
  return out;
}

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& kernels, const TensorT<T>& bias,
                  Conv2dGeometry geometry) {
  require_rank(x.shape(), 3, "conv2d");
  require_rank(kernels.shape(), 4, "conv2d");
  const std::size_t c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t c_out = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != c_in) {
    throw ShapeError("conv2d: kernels " + shape_str(kernels.shape()) + " do not match input " +
                     shape_str(x.shape()));
  }
  if (bias.numel() != c_out) throw ShapeError("conv2d: bias must have C_out entries");
  if (geometry.stride_h == 0 || geometry.stride_w == 0) throw ShapeError("conv2d: zero stride");
  const Padding ph = same_padding(h, kh, geometry.stride_h);
  const Padding pw = same_padding(w, kw, geometry.stride_w);
  const std::size_t oh = ph.out, ow = pw.out, positions = oh * ow;
  const std::size_t patch = c_in * kh * kw;

  // im2col: rows are (channel, dy, dx), columns are output positions.
  auto cols = std::make_shared<std::vector<T>>(patch * positions, T{0});
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t dy = 0; dy < kh; ++dy) {
      for (std::size_t dx = 0; dx < kw; ++dx) {
        T* row = cols->data() + ((c * kh + dy) * kw + dx) * positions;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * geometry.stride_h + dy) -
                                    static_cast<std::ptrdiff_t>(ph.before);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * geometry.stride_w + dx) -
                                      static_cast<std::ptrdiff_t>(pw.before);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            row[oy * ow + ox] = x[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }

  TensorT<T> out({c_out, oh, ow});
  auto o = out.mutable_values();
  for (std::size_t co = 0; co < c_out; ++co) {
    std::fill_n(o.data() + co * positions, positions, bias[co]);
  }
  gemm_nn(c_out, patch, positions, kernels.values().data(), cols->data(), o.data());

  record<T>("conv2d", {x, kernels, bias}, out,
            [x, kernels, bias, cols, geometry, ph, pw, c_in, h, w, c_out, kh, kw, oh, ow, positions,
             patch](std::span<const T> g) mutable {
              if (bias.requires_grad()) {
                auto gb = bias.mutable_grad();
                for (std::size_t co = 0; co < c_out; ++co) {
                  T total{0};
                  for (std::size_t p = 0; p < positions; ++p) total += g[co * positions + p];
                  gb[co] += total;
                }
              }
              if (kernels.requires_grad()) {
                gemm_nt(c_out, positions, patch, g.data(), cols->data(),
                        kernels.mutable_grad().data());
              }
              if (!x.requires_grad()) return;
              std::vector<T> gcols(patch * positions, T{0});
              gemm_tn(patch, c_out, positions, kernels.values().data(), g.data(), gcols.data());
              auto gx = x.mutable_grad();
              for (std::size_t c = 0; c < c_in; ++c) {
                for (std::size_t dy = 0; dy < kh; ++dy) {
                  for (std::size_t dx = 0; dx < kw; ++dx) {
                    const T* row = gcols.data() + ((c * kh + dy) * kw + dx) * positions;
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                      const std::ptrdiff_t iy =
                          static_cast<std::ptrdiff_t>(oy * geometry.stride_h + dy) -
                          static_cast<std::ptrdiff_t>(ph.before);
                      if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                      for (std::size_t ox = 0; ox < ow; ++ox) {
                        const std::ptrdiff_t ix =
                            static_cast<std::ptrdiff_t>(ox * geometry.stride_w + dx) -
                            static_cast<std::ptrdiff_t>(pw.before);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                        gx[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] +=
                            row[oy * ow + ox];
                      }
                    }
                  }
                }
              }
            });
  return out;
}

template <typename T>
TensorT<T> dropout(const TensorT<T>& a, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ParameterError("dropout: rate must lie in [0, 1)");
  if (rate == 0.0) return a;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(a.numel());
  for (auto& m : mask) m = rng.uniform() < rate ? T{0} : keep_scale;
  TensorT<T> out(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * mask[i];
  record<T>("dropout", {a}, out, [a, mask](std::span<const T> g) mutable {
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * mask[i];
  });
  return out;
}

#define KWS_INSTANTIATE(T)                                                                        \
  template TensorT<T> matmul(const TensorT<T>&, const TensorT<T>&);                               \
  template TensorT<T> add(const TensorT<T>&, const TensorT<T>&);                                  \
  template TensorT<T> sub(const TensorT<T>&, const TensorT<T>&);                                  \
  template TensorT<T> mul(const TensorT<T>&, const TensorT<T>&);                                  \
  template TensorT<T> scale(const TensorT<T>&, T);                                                \
  template TensorT<T> add_bias(const TensorT<T>&, const TensorT<T>&);                             \
  template TensorT<T> relu(const TensorT<T>&);                                                    \
  template TensorT<T> log(const TensorT<T>&);                                                     \
  template TensorT<T> square(const TensorT<T>&);                                                  \
  template TensorT<T> abs(const TensorT<T>&);                                                     \
  template TensorT<T> softmax(const TensorT<T>&);                                                 \
  template TensorT<T> log_softmax(const TensorT<T>&);                                             \
  template TensorT<T> concat(const std::vector<TensorT<T>>&, std::size_t);                        \
  template TensorT<T> reshape(const TensorT<T>&, Shape);                                          \
  template TensorT<T> transpose(const TensorT<T>&);                                               \
  template TensorT<T> slice(const TensorT<T>&, std::size_t, std::size_t, std::size_t);            \
  template TensorT<T> mean(const TensorT<T>&, std::size_t);                                       \
  template TensorT<T> mean_all(const TensorT<T>&);                                                \
  template TensorT<T> sum_all(const TensorT<T>&);                                                 \
  template TensorT<T> pick(const TensorT<T>&, std::size_t);                                       \
  template TensorT<T> layer_norm(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, T);     \
  template TensorT<T> conv2d(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,             \
                             Conv2dGeometry);                                                     \
  template TensorT<T> dropout(const TensorT<T>&, double, Rng&);

KWS_INSTANTIATE(float)
KWS_INSTANTIATE(double)

#undef KWS_INSTANTIATE

}  // namespace kws::ops
