#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kws/tensor.hpp"

namespace kws {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamMoments {
  std::vector<T> m;
  std::vector<T> v;
};

/// Adam with bias correction. Moment buffers are keyed by parameter name and
/// created lazily as zeros on the first step that sees the parameter.
template <typename T>
class BasicAdam {
 public:
  explicit BasicAdam(AdamConfig config = {});

  /// One update from the parameters' current gradients. Every gradient is
  /// checked first; a non-finite entry throws NumericError naming the
  /// parameter and nothing is modified.
  void step(std::span<NamedTensor<T>> params);

  const AdamConfig& config() const { return config_; }
  /// Learning rate for subsequent steps (schedules).
  void set_lr(double lr);
  std::uint64_t steps() const { return t_; }
  const std::map<std::string, AdamMoments<T>>& moments() const { return moments_; }

  /// Restores state saved alongside a checkpoint.
  void restore(std::uint64_t t, std::map<std::string, AdamMoments<T>> moments);

 private:
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::map<std::string, AdamMoments<T>> moments_;
};

using Adam = BasicAdam<float>;

}  // namespace kws
