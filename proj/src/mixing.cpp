#include <cmath>

#include "kws/errors.hpp"
#include "kws/frontend.hpp"

namespace kws {

std::vector<float> noise_segment(const AudioBuffer& noise, std::size_t offset, std::size_t length) {
  noise.validate();
  std::vector<float> out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = noise.samples[(offset + i) % noise.size()];
  return out;
}

NoiseMix mix_at_snr(const AudioBuffer& speech, const AudioBuffer& noise, double snr_db, Rng& rng) {
  speech.validate();
  noise.validate();
  const double ps = mean_power(speech.samples);
  if (!(ps > 0.0)) throw DataError("mix_at_snr: speech is silent");
  NoiseMix mix;
  if (noise.size() > speech.size()) mix.noise_offset = rng.below(noise.size() - speech.size() + 1);
  const auto segment = noise_segment(noise, mix.noise_offset, speech.size());
  const double pn = mean_power(segment);
  if (!(pn > 0.0)) throw DataError("mix_at_snr: noise segment is silent");
  mix.gain = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  mix.audio.sample_rate = speech.sample_rate;
  mix.audio.samples.resize(speech.size());
  for (std::size_t i = 0; i < speech.size(); ++i) {
    mix.audio.samples[i] = static_cast<float>(speech.samples[i] + mix.gain * segment[i]);
  }
  return mix;
}

}  // namespace kws
