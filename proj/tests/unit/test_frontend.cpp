#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "kws/frontend.hpp"

using namespace kws;

TEST(LogMel, OneSecondGivesNinetyEightFrames) {
  const auto f = log_mel(test::sine(300, 16000));
  EXPECT_EQ(f.frames(), 98u);
  EXPECT_EQ(f.bins(), 40u);
}

TEST(LogMel, FrameCountFormula) {
  const FrontendConfig cfg;
  for (std::size_t n : {480u, 481u, 640u, 12345u, 20000u}) {
    EXPECT_EQ(cfg.frame_count(n), (n - 480) / 160 + 1) << n;
    EXPECT_EQ(log_mel(test::noise(n, n)).frames(), cfg.frame_count(n));
  }
  EXPECT_EQ(cfg.frame_count(479), 0u);
}

TEST(LogMel, SilenceSitsOnTheFloor) {
  AudioBuffer a;
  a.samples.assign(4000, 0.0f);
  const auto f = log_mel(a);
  for (float v : f.values()) EXPECT_NEAR(v, std::log(1e-6), 1e-5);
  EXPECT_NEAR(std::log(1e-6), -13.8155, 1e-4);
}

TEST(LogMel, OneKilohertzPeaksAtNearestCenter) {
  const FrontendConfig cfg;
  // Centers from the HTK formula, computed here independently.
  auto mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  std::size_t nearest = 0;
  double best = 1e9;
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double c = hz(mel(cfg.f_min) + (m + 1) * (mel(cfg.f_max) - mel(cfg.f_min)) / (cfg.n_mels + 1));
    if (std::abs(c - 1000.0) < best) {
      best = std::abs(c - 1000.0);
      nearest = m;
    }
  }
  const MelFilterbank bank(cfg);
  EXPECT_NEAR(bank.centers_hz()[nearest], hz(mel(cfg.f_min) + (nearest + 1) * (mel(cfg.f_max) - mel(cfg.f_min)) / (cfg.n_mels + 1)), 1e-6);

  const auto f = log_mel(test::sine(1000, 16000, 1.0), cfg);
  for (std::size_t t = 0; t < f.frames(); ++t) {
    const auto row = f.row(t);
    const auto arg = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    EXPECT_EQ(arg, nearest) << "frame " << t;
  }
}

TEST(MelFilterbank, TrianglesPeakAtOneAndAreNonNegative) {
  const FrontendConfig cfg;
  const MelFilterbank bank(cfg);
  EXPECT_EQ(bank.size(), 40u);
  EXPECT_EQ(bank.n_bins(), 257u);
  for (std::size_t m = 0; m < bank.size(); ++m) {
    double peak = 0;
    for (double w : bank.weights(m)) {
      EXPECT_GE(w, 0.0);
      peak = std::max(peak, w);
    }
    EXPECT_GT(peak, 0.0) << m;
    EXPECT_LE(peak, 1.0 + 1e-12);
    if (m) EXPECT_GT(bank.centers_hz()[m], bank.centers_hz()[m - 1]);
  }
}

TEST(MelScale, RoundTrip) {
  for (double f : {0.0, 20.0, 1000.0, 8000.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(f)), f, 1e-9);
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-9);
}

TEST(Fft, MatchesDirectDft) {
  Rng rng(6);
  std::vector<std::complex<double>> x(16);
  for (auto& v : x) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
  auto y = x;
  fft_inplace(y);
  for (std::size_t k = 0; k < 16; ++k) {
    std::complex<double> s = 0;
    for (std::size_t n = 0; n < 16; ++n) s += x[n] * std::polar(1.0, -2 * std::numbers::pi * k * n / 16.0);
    EXPECT_NEAR(std::abs(y[k] - s), 0.0, 1e-10);
  }
  std::vector<std::complex<double>> bad(12);
  EXPECT_THROW(fft_inplace(bad), ParameterError);
}

TEST(LogMel, VolumeScalingShiftsEveryEntry) {
  const auto a = test::noise(8000, 2, 0.2);
  auto b = a;
  for (auto& s : b.samples) s *= 1.5f;
  const auto fa = log_mel(a), fb = log_mel(b);
  for (std::size_t i = 0; i < fa.values().size(); ++i) EXPECT_NEAR(fb.values()[i] - fa.values()[i], 2 * std::log(1.5), 1e-4);
}

TEST(LogMel, TooShortAndBadConfig) {
  EXPECT_THROW(log_mel(test::sine(100, 479)), TooShortError);
  FrontendConfig cfg;
  cfg.fft_size = 500;
  EXPECT_THROW(cfg.validate(), ParameterError);
  cfg = {};
  cfg.window = 1024;
  EXPECT_THROW(cfg.validate(), ParameterError);
}
