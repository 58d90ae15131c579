#include "kws/adam.hpp"

#include <cmath>

namespace kws {

template <typename T>
BasicAdam<T>::BasicAdam(AdamConfig config) : config_(config) {
  if (!(config_.lr > 0.0)) throw ParameterError("adam: learning rate must be positive");
}

template <typename T>
void BasicAdam<T>::step(std::span<NamedTensor<T>> params) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    if (p.tensor.grad().size() != p.tensor.numel()) {
      throw ShapeError("adam: gradient of " + p.name + " has the wrong size");
    }
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam: non-finite gradient in parameter " + p.name);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
  for (auto& p : params) {
    auto& mom = moments_[p.name];
    const std::size_t n = p.tensor.numel();
    if (mom.m.size() != n) {
      mom.m.assign(n, T{0});
      mom.v.assign(n, T{0});
    }
    if (!p.tensor.has_grad()) continue;
    auto theta = p.tensor.mutable_values();
    auto g = p.tensor.grad();
    for (std::size_t i = 0; i < n; ++i) {
      mom.m[i] = b1 * mom.m[i] + (T{1} - b1) * g[i];
      mom.v[i] = b2 * mom.v[i] + (T{1} - b2) * g[i] * g[i];
      const double m_hat = static_cast<double>(mom.m[i]) / c1;
      const double v_hat = static_cast<double>(mom.v[i]) / c2;
      theta[i] -= static_cast<T>(config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps));
    }
  }
}

template <typename T>
void BasicAdam<T>::set_lr(double lr) {
  if (!(lr > 0.0)) throw ParameterError("adam: learning rate must be positive");
  config_.lr = lr;
}

template <typename T>
void BasicAdam<T>::restore(std::uint64_t t, std::map<std::string, AdamMoments<T>> moments) {
  t_ = t;
  moments_ = std::move(moments);
}

template class BasicAdam<float>;
template class BasicAdam<double>;

}  // namespace kws
