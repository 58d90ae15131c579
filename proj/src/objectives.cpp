#include "kws/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kws {

namespace o = ops;

void LossWeights::validate() const {
  if (similarity < 0.0 || recon < 0.0 || recon_aug < 0.0) {
    throw ParameterError("loss weights must be non-negative");
  }
}

template <typename T>
TensorOf<T> ce_loss(const TensorOf<T>& logits, std::size_t label) {
  if (label >= logits.numel()) {
    throw DataError("ce_loss: label " + std::to_string(label) + " outside [0, " +
                    std::to_string(logits.numel()) + ")");
  }
  return o::scale(o::pick(o::log_softmax(logits), label), T{-1});
}

template <typename T>
TensorOf<T> ce_loss(std::span<const TensorOf<T>> logits, std::span<const std::size_t> labels) {
  if (logits.empty() || logits.size() != labels.size()) {
    throw ShapeError("ce_loss: need one label per logit vector");
  }
  std::vector<TensorOf<T>> losses;
  for (std::size_t i = 0; i < logits.size(); ++i) losses.push_back(ce_loss(logits[i], labels[i]));
  return o::mean_all(o::concat(losses, 0));
}

template <typename T>
TensorOf<T> sim_loss(const TensorOf<T>& e_bn, const TensorOf<T>& e_bn_aug) {
  if (e_bn.shape() != e_bn_aug.shape()) {
    throw ShapeError("sim_loss: shape mismatch " + shape_str(e_bn.shape()) + " vs " +
                     shape_str(e_bn_aug.shape()));
  }
  return o::mean_all(o::square(o::sub(e_bn, e_bn_aug)));
}

template <typename T>
TensorOf<T> recon_loss(const TensorOf<T>& features, const TensorOf<T>& predicted_mean) {
  if (features.rank() != 2 || features.dim(1) != predicted_mean.numel()) {
    throw ShapeError("recon_loss: features " + shape_str(features.shape()) + " do not match prediction " +
                     shape_str(predicted_mean.shape()));
  }
  const auto average = o::mean(features, 0);
  return o::mean_all(o::square(o::sub(average, o::reshape(predicted_mean, average.shape()))));
}

template <typename T>
TensorOf<T> unsup_loss(const UnsupervisedTerms<T>& terms, const LossWeights& w) {
  w.validate();
  return o::add(o::add(o::scale(terms.sim, static_cast<T>(w.similarity)), o::scale(terms.x, static_cast<T>(w.recon))),
                o::scale(terms.x_aug, static_cast<T>(w.recon_aug)));
}

double unsup_value(double l_sim, double l_x, double l_x_aug, const LossWeights& w) {
  return w.similarity * l_sim + w.recon * l_x + w.recon_aug * l_x_aug;
}

template <typename T>
TensorOf<T> apc_loss(const TensorOf<T>& features, const TensorOf<T>& predictions, std::size_t shift) {
  if (features.shape() != predictions.shape() || features.rank() != 2) {
    throw ShapeError("apc_loss: predictions " + shape_str(predictions.shape()) + " must match features " +
                     shape_str(features.shape()));
  }
  if (shift == 0) throw ParameterError("apc_loss: shift must be at least 1");
  const std::size_t frames = features.dim(0);
  if (frames <= shift) {
    throw TooShortError("apc_loss: " + std::to_string(frames) + " frames cannot be predicted " +
                        std::to_string(shift) + " steps ahead");
  }
  const auto pred = o::slice(predictions, 0, 0, frames - shift);
  const auto target = o::slice(features, 0, shift, frames);
  return o::mean_all(o::abs(o::sub(pred, target)));
}

std::size_t MaskPlan::chosen() const {
  return static_cast<std::size_t>(
      std::count_if(actions.begin(), actions.end(), [](MaskAction a) { return a != MaskAction::keep; }));
}

MaskedFeatures mpc_mask(const FeatureMatrix& features, Rng& rng, const MaskConfig& cfg) {
  const std::size_t frames = features.frames();
  MaskedFeatures out{features, {}};
  out.plan.actions.assign(frames, MaskAction::keep);
  out.plan.source.assign(frames, 0);
  const auto count = static_cast<std::size_t>(std::llround(cfg.chosen_fraction * static_cast<double>(frames)));
  // Partial Fisher-Yates picks `count` distinct frames.
  std::vector<std::size_t> order(frames);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < count && i < frames; ++i) {
    std::swap(order[i], order[i + rng.below(frames - i)]);
  }
  for (std::size_t i = 0; i < count && i < frames; ++i) {
    const std::size_t t = order[i];
    const double u = rng.uniform();
    auto row = out.features.row(t);
    if (u < cfg.zero_fraction) {
      out.plan.actions[t] = MaskAction::zero;
      std::fill(row.begin(), row.end(), 0.0f);
    } else if (u < cfg.zero_fraction + cfg.swap_fraction) {
      out.plan.actions[t] = MaskAction::swap;
      const std::size_t src = rng.below(frames);
      out.plan.source[t] = src;
      const auto from = features.row(src);
      std::copy(from.begin(), from.end(), row.begin());
    } else {
      out.plan.actions[t] = MaskAction::unchanged;
    }
  }
  return out;
}

template <typename T>
TensorOf<T> mpc_loss(const TensorOf<T>& predictions, const TensorOf<T>& originals, const MaskPlan& plan) {
  if (predictions.shape() != originals.shape() || predictions.rank() != 2 ||
      predictions.dim(0) != plan.actions.size()) {
    throw ShapeError("mpc_loss: predictions " + shape_str(predictions.shape()) + ", originals " +
                     shape_str(originals.shape()) + " and plan of " + std::to_string(plan.actions.size()) +
                     " frames disagree");
  }
  const std::size_t chosen = plan.chosen();
  if (chosen == 0) return TensorOf<T>::scalar(T{0});
  const std::size_t width = predictions.dim(1);
  TensorOf<T> mask(predictions.shape());
  auto m = mask.mutable_values();
  for (std::size_t t = 0; t < plan.actions.size(); ++t) {
    if (plan.actions[t] == MaskAction::keep) continue;
    std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(t * width), width, T{1});
  }
  const auto total = o::sum_all(o::mul(o::abs(o::sub(predictions, originals)), mask));
  return o::scale(total, T{1} / static_cast<T>(chosen * width));
}

#define KWS_INSTANTIATE(T)                                                                         \
  template TensorOf<T> ce_loss<T>(const TensorOf<T>&, std::size_t);                                \
  template TensorOf<T> ce_loss<T>(std::span<const TensorOf<T>>, std::span<const std::size_t>);     \
  template TensorOf<T> sim_loss<T>(const TensorOf<T>&, const TensorOf<T>&);                        \
  template TensorOf<T> recon_loss<T>(const TensorOf<T>&, const TensorOf<T>&);                      \
  template TensorOf<T> unsup_loss<T>(const UnsupervisedTerms<T>&, const LossWeights&);             \
  template TensorOf<T> apc_loss<T>(const TensorOf<T>&, const TensorOf<T>&, std::size_t);           \
  template TensorOf<T> mpc_loss<T>(const TensorOf<T>&, const TensorOf<T>&, const MaskPlan&);

KWS_INSTANTIATE(float)
KWS_INSTANTIATE(double)

#undef KWS_INSTANTIATE

}  // namespace kws
