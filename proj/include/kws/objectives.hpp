#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kws/frontend.hpp"
#include "kws/ops.hpp"
#include "kws/random.hpp"

namespace kws {

template <typename T> using TensorOf = BasicTensor<T>;

/// Weights of the unsupervised objective.
struct LossWeights {
  double similarity = 0.9;      // lambda1
  double recon = 0.05;          // lambda2, original branch
  double recon_aug = 0.05;      // lambda3, augmented branch

  void validate() const;
};

struct LossReport {
  double l_ce = 0.0;
  double l_sim = 0.0;
  double l_x = 0.0;
  double l_x_aug = 0.0;
  double l_ul = 0.0;
};

/// -log softmax(logits)[label].
template <typename T>
TensorOf<T> ce_loss(const TensorOf<T>& logits, std::size_t label);

/// Batch mean of ce_loss.
template <typename T>
TensorOf<T> ce_loss(std::span<const TensorOf<T>> logits, std::span<const std::size_t> labels);

/// Mean squared difference between two bottleneck vectors. Gradients reach
/// both arguments.
template <typename T>
TensorOf<T> sim_loss(const TensorOf<T>& e_bn, const TensorOf<T>& e_bn_aug);

/// Mean squared difference between the time-averaged features [T x U] and the
/// predicted average [U].
template <typename T>
TensorOf<T> recon_loss(const TensorOf<T>& features, const TensorOf<T>& predicted_mean);

template <typename T>
struct UnsupervisedTerms {
  TensorOf<T> sim;
  TensorOf<T> x;
  TensorOf<T> x_aug;
};

/// lambda1 * sim + lambda2 * x + lambda3 * x_aug.
template <typename T>
TensorOf<T> unsup_loss(const UnsupervisedTerms<T>& terms, const LossWeights& w);

/// Scalar form of unsup_loss, for reports.
double unsup_value(double l_sim, double l_x, double l_x_aug, const LossWeights& w);

/// Mean absolute error between predictions of rows [0, T - shift) and input
/// frames [shift, T). Both are [T x U].
template <typename T>
TensorOf<T> apc_loss(const TensorOf<T>& features, const TensorOf<T>& predictions, std::size_t shift);

enum class MaskAction : unsigned char {
  keep,       // not chosen, not scored
  zero,       // chosen, replaced by a zero vector
  swap,       // chosen, replaced by another frame of the utterance
  unchanged,  // chosen, left intact but scored
};

struct MaskPlan {
  std::vector<MaskAction> actions;
  std::vector<std::size_t> source;  // frame copied in for swap actions
  std::size_t chosen() const;
};

struct MaskConfig {
  double chosen_fraction = 0.15;
  double zero_fraction = 0.8;
  double swap_fraction = 0.1;
};

struct MaskedFeatures {
  FeatureMatrix features;
  MaskPlan plan;
};

/// Chooses round(fraction * T) frames; each chosen frame is zeroed, swapped
/// with a uniformly drawn frame, or left unchanged with 80/10/10 odds.
MaskedFeatures mpc_mask(const FeatureMatrix& features, Rng& rng, const MaskConfig& cfg = {});

/// Mean absolute error over chosen frames only; zero when nothing was chosen.
template <typename T>
TensorOf<T> mpc_loss(const TensorOf<T>& predictions, const TensorOf<T>& originals, const MaskPlan& plan);

}  // namespace kws
