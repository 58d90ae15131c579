#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "kws/frontend.hpp"

using namespace kws;

namespace {

AudioBuffer scaled_to_power(AudioBuffer a, double power) {
  const double g = std::sqrt(power / mean_power(a.samples));
  for (auto& s : a.samples) s = static_cast<float>(s * g);
  return a;
}

}  // namespace

TEST(MixAtSnr, EqualPowerZeroDecibels) {
  const auto speech = scaled_to_power(test::sine(440, 8000), 0.1);
  const auto noise = scaled_to_power(test::noise(8000, 1), mean_power(speech.samples));
  Rng rng(0);
  EXPECT_NEAR(mix_at_snr(speech, noise, 0.0, rng).gain, 1.0, 1e-6);
}

TEST(MixAtSnr, TwentyDecibelsIsOneTenth) {
  const auto speech = scaled_to_power(test::sine(440, 8000), 0.1);
  const auto noise = scaled_to_power(test::noise(8000, 1), mean_power(speech.samples));
  Rng rng(0);
  EXPECT_NEAR(mix_at_snr(speech, noise, 20.0, rng).gain, 0.1, 1e-7);
}

TEST(MixAtSnr, RecoversRequestedSnr) {
  Rng rng(13);
  const auto noise = test::noise(48000, 2);
  for (int i = 0; i < 100; ++i) {
    const auto speech = test::sine(200 + 30 * i, 16000, 0.05 + 0.01 * i);
    const double snr = rng.uniform(0.0, 20.0);
    const auto mix = mix_at_snr(speech, noise, snr, rng);
    const auto seg = noise_segment(noise, mix.noise_offset, speech.size());
    double pn = 0;
    for (float v : seg) pn += (mix.gain * v) * (mix.gain * v);
    pn /= seg.size();
    EXPECT_NEAR(10 * std::log10(mean_power(speech.samples) / pn), snr, 0.01);
    double residual = 0;
    for (std::size_t k = 0; k < seg.size(); ++k)
      residual = std::max(residual, std::abs(mix.audio.samples[k] - speech.samples[k] - mix.gain * seg[k]));
    EXPECT_LT(residual, 1e-6);
  }
}

TEST(MixAtSnr, ShortNoiseIsTiled) {
  AudioBuffer noise;
  noise.samples = {1, -1, 0.5f};
  const auto seg = noise_segment(noise, 0, 7);
  EXPECT_EQ(seg, (std::vector<float>{1, -1, 0.5f, 1, -1, 0.5f, 1}));
}

TEST(MixAtSnr, SilentInputsRejected) {
  AudioBuffer silent;
  silent.samples.assign(1000, 0.0f);
  Rng rng(0);
  EXPECT_THROW(mix_at_snr(silent, test::noise(1000, 1), 10, rng), DataError);
  EXPECT_THROW(mix_at_snr(test::sine(100, 1000), silent, 10, rng), DataError);
}

TEST(MixAtSnr, SameSeedSameMix) {
  const auto speech = test::sine(300, 4000);
  const auto noise = test::noise(20000, 5);
  Rng a(77), b(77);
  EXPECT_EQ(mix_at_snr(speech, noise, 5, a).audio.samples, mix_at_snr(speech, noise, 5, b).audio.samples);
}
