#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "kws/model.hpp"
#include "kws/objectives.hpp"
#include "kws/tape.hpp"

using namespace kws;
namespace o = kws::ops;

namespace {

Tensor64 random64(Shape s, Rng& rng, double lo = -1, double hi = 1) {
  Tensor64 t(std::move(s));
  for (auto& v : t.mutable_values()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST(CrossEntropy, UniformLogitsGiveLogTwelve) {
  EXPECT_NEAR(ce_loss(Tensor64({12}), 3).item(), std::log(12.0), 1e-12);
  EXPECT_NEAR(ce_loss(Tensor({12}), 3).item(), std::log(12.0), 1e-6);
}

TEST(CrossEntropy, SaturatedTrueClass) {
  Tensor64 logits({12});
  logits.mutable_values()[5] = 30.0;
  EXPECT_LT(ce_loss(logits, 5).item(), 1e-9);
}

TEST(CrossEntropy, MatchesSoftmaxThenLog) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto z = random64({12}, rng, -5, 5);
    const std::size_t y = rng.below(12);
    double sum = 0;
    for (double v : z.values()) sum += std::exp(v);
    EXPECT_NEAR(ce_loss(z, y).item(), -std::log(std::exp(z[y]) / sum), 1e-6);
  }
}

TEST(CrossEntropy, BatchMean) {
  Rng rng(2);
  const std::vector<Tensor64> z{random64({12}, rng), random64({12}, rng)};
  const std::vector<std::size_t> y{1, 7};
  EXPECT_NEAR(ce_loss<double>(z, y).item(), 0.5 * (ce_loss(z[0], 1).item() + ce_loss(z[1], 7).item()), 1e-12);
  EXPECT_THROW(ce_loss(z[0], 12), DataError);
}

TEST(CrossEntropy, ConvexAlongLines) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random64({12}, rng, -4, 4), b = random64({12}, rng, -4, 4);
    const double t = rng.uniform();
    Tensor64 mid({12});
    for (std::size_t i = 0; i < 12; ++i) mid.mutable_values()[i] = t * a[i] + (1 - t) * b[i];
    EXPECT_LE(ce_loss(mid, 4).item(), t * ce_loss(a, 4).item() + (1 - t) * ce_loss(b, 4).item() + 1e-12);
  }
}

TEST(Similarity, IdentityIsZeroAndConstantOffsetIsSquared) {
  Rng rng(4);
  const auto a = random64({800}, rng);
  EXPECT_EQ(sim_loss(a, a).item(), 0.0);
  Tensor64 b({800});
  for (std::size_t i = 0; i < 800; ++i) b.mutable_values()[i] = a[i] + 0.3;
  EXPECT_NEAR(sim_loss(a, b).item(), 0.09, 1e-12);
}

TEST(Similarity, MatchesLoop) {
  Rng rng(5);
  const auto a = random64({800}, rng), b = random64({800}, rng);
  double s = 0;
  for (std::size_t i = 0; i < 800; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  EXPECT_NEAR(sim_loss(a, b).item(), s / 800, 1e-6);
}

TEST(Similarity, IdentityPairHasZeroGradient) {
  Rng rng(6);
  auto cfg = test::tiny_config();
  cfg.dropout = 0.0;
  Rng init(7);
  const auto p = params_cast<double>(init_params<float>(cfg, init));
  const auto x = random64({40, 40}, rng, -10, 0);
  Tape64 tape;
  {
    TapeScope<double> scope(tape);
    const auto e = forward_bottleneck(p, x).e_bn;
    const auto e_aug = forward_bottleneck(p, x).e_bn;
    const auto loss = sim_loss(e, e_aug);
    EXPECT_EQ(loss.item(), 0.0);
    tape.backward(loss);
  }
  for (const auto& n : p.named()) {
    if (!n.tensor.has_grad()) continue;
    for (double g : n.tensor.grad()) ASSERT_LE(std::abs(g), 1e-6) << n.name;
  }
}

TEST(Reconstruction, Cases) {
  Rng rng(8);
  const auto x = random64({7, 40}, rng, -10, 0);
  Tensor64 mean({40});
  for (std::size_t u = 0; u < 40; ++u) {
    double s = 0;
    for (std::size_t t = 0; t < 7; ++t) s += x[t * 40 + u];
    mean.mutable_values()[u] = s / 7;
  }
  EXPECT_NEAR(recon_loss(x, mean).item(), 0.0, 1e-24);
  EXPECT_NEAR(recon_loss(Tensor64::full({5, 40}, -3.0), Tensor64({40})).item(), 9.0, 1e-12);
  const auto pred = random64({40}, rng, -10, 0);
  double s = 0;
  for (std::size_t u = 0; u < 40; ++u) s += (mean[u] - pred[u]) * (mean[u] - pred[u]);
  EXPECT_NEAR(recon_loss(x, pred).item(), s / 40, 1e-6);
}

TEST(Unsupervised, WeightedSum) {
  const LossWeights w;
  EXPECT_NEAR(unsup_value(1, 2, 4, w), 1.2, 1e-12);
  EXPECT_EQ(unsup_value(0, 0, 0, w), 0.0);
  const UnsupervisedTerms<double> terms{Tensor64::scalar(1), Tensor64::scalar(2), Tensor64::scalar(4)};
  EXPECT_NEAR(unsup_loss(terms, w).item(), 1.2, 1e-12);
}

TEST(Unsupervised, IdentityPairReducesToReconstruction) {
  Rng init(9);
  const auto p = params_cast<double>(init_params<float>(test::tiny_config(), init));
  Rng rng(10);
  const auto x = random64({40, 40}, rng, -10, 0);
  const auto e = forward_bottleneck(p, x).e_bn;
  const UnsupervisedTerms<double> t{sim_loss(e, e), recon_loss(x, reconstruct(p, e)),
                                    recon_loss(x, reconstruct(p, e))};
  EXPECT_EQ(t.sim.item(), 0.0);
  EXPECT_NEAR(unsup_loss(t, LossWeights{}).item(), 0.1 * t.x.item(), 1e-12);
}

TEST(Unsupervised, WeightsValidated) {
  LossWeights w;
  w.similarity = -1;
  EXPECT_THROW(w.validate(), ParameterError);
}

TEST(Apc, Cases) {
  Rng rng(11);
  const std::size_t T = 12, U = 40, n = 3;
  const auto x = random64({T, U}, rng);
  Tensor64 perfect({T, U}), off({T, U});
  for (std::size_t t = 0; t + n < T; ++t)
    for (std::size_t u = 0; u < U; ++u) {
      perfect.mutable_values()[t * U + u] = x[(t + n) * U + u];
      off.mutable_values()[t * U + u] = x[(t + n) * U + u] + 1.0;
    }
  EXPECT_EQ(apc_loss(x, perfect, n).item(), 0.0);
  EXPECT_NEAR(apc_loss(x, off, n).item(), 1.0, 1e-12);
  const auto pred = random64({T, U}, rng);
  double s = 0;
  for (std::size_t t = 0; t + n < T; ++t)
    for (std::size_t u = 0; u < U; ++u) s += std::abs(pred[t * U + u] - x[(t + n) * U + u]);
  EXPECT_NEAR(apc_loss(x, pred, n).item(), s / ((T - n) * U), 1e-6);
  EXPECT_THROW(apc_loss(x, pred, T), TooShortError);
}

TEST(Mpc, MaskStatistics) {
  Rng rng(12);
  std::size_t frames = 0, chosen = 0, zero = 0, swap = 0, same = 0;
  while (frames < 100000) {
    FeatureMatrix x(100, 4);
    for (auto& v : x.values()) v = static_cast<float>(rng.uniform(1, 2));
    const auto m = mpc_mask(x, rng);
    frames += 100;
    for (std::size_t t = 0; t < 100; ++t) {
      switch (m.plan.actions[t]) {
        case MaskAction::keep:
          EXPECT_EQ(m.features.at(t, 0), x.at(t, 0));
          break;
        case MaskAction::zero:
          ++zero;
          EXPECT_EQ(m.features.at(t, 0), 0.0f);
          break;
        case MaskAction::swap:
          ++swap;
          EXPECT_EQ(m.features.at(t, 0), x.at(m.plan.source[t], 0));
          break;
        case MaskAction::unchanged:
          ++same;
          EXPECT_EQ(m.features.at(t, 0), x.at(t, 0));
          break;
      }
    }
    chosen += m.plan.chosen();
  }
  EXPECT_EQ(chosen, zero + swap + same);
  EXPECT_NEAR(static_cast<double>(chosen) / frames, 0.15, 0.01);
  EXPECT_NEAR(static_cast<double>(zero) / chosen, 0.8, 0.02);
  EXPECT_NEAR(static_cast<double>(swap) / chosen, 0.1, 0.02);
  EXPECT_NEAR(static_cast<double>(same) / chosen, 0.1, 0.02);
}

TEST(Mpc, FixedSeedFixedPlan) {
  FeatureMatrix x(50, 3);
  Rng a(1), b(1);
  const auto ma = mpc_mask(x, a), mb = mpc_mask(x, b);
  EXPECT_EQ(ma.plan.actions, mb.plan.actions);
  EXPECT_EQ(ma.plan.source, mb.plan.source);
}

TEST(Mpc, LossOverChosenFramesOnly) {
  Rng rng(13);
  FeatureMatrix one(1, 4);
  const auto m = mpc_mask(one, rng);
  EXPECT_EQ(m.plan.chosen(), 0u);
  EXPECT_EQ(mpc_loss(Tensor64({1, 4}), Tensor64::full({1, 4}, 5.0), m.plan).item(), 0.0);

  MaskPlan plan;
  plan.actions = {MaskAction::keep, MaskAction::zero, MaskAction::unchanged};
  plan.source = {0, 0, 0};
  const Tensor64 orig({3, 2}, {1, 1, 1, 1, 1, 1});
  const Tensor64 pred({3, 2}, {100, 100, 2, 0, 1, 4});
  EXPECT_NEAR(mpc_loss(pred, orig, plan).item(), (1 + 1 + 0 + 3) / 4.0, 1e-12);
}
