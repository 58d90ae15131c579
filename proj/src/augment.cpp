#include <cmath>
#include <string>

#include "kws/augment.hpp"
#include "kws/errors.hpp"

namespace kws {

void AugmentSpec::validate() const {
  for (const auto& [name, r] : {std::pair{"speed", speed}, std::pair{"volume", volume}}) {
    if (!(r.lo > 0.0) || r.lo > r.hi || r.lo > 1.0 || r.hi < 1.0) {
      throw ParameterError(std::string("augment: ") + name + " range [" + std::to_string(r.lo) + ", " +
                           std::to_string(r.hi) + "] must be positive and contain 1");
    }
  }
  if (!(canvas_seconds > 0.0)) throw ParameterError("augment: canvas_seconds must be positive");
}

std::size_t AugmentSpec::canvas_samples(std::uint32_t sample_rate) const {
  return static_cast<std::size_t>(std::llround(canvas_seconds * sample_rate));
}

AudioBuffer volume_perturb(const AudioBuffer& audio, double ratio) {
  if (!(ratio > 0.0)) throw ParameterError("volume_perturb: ratio must be positive");
  AudioBuffer out = audio;
  const auto r = static_cast<float>(ratio);
  for (auto& s : out.samples) s *= r;
  return out;
}

AudioBuffer speed_perturb(const AudioBuffer& audio, double ratio) {
  if (!(ratio > 0.0)) throw ParameterError("speed_perturb: ratio must be positive");
  audio.validate();
  const auto n = audio.size();
  const auto out_len = static_cast<std::size_t>(std::llround(static_cast<double>(n) / ratio));
  if (out_len < 2) throw ParameterError("speed_perturb: result would have fewer than 2 samples");
  AudioBuffer out;
  out.sample_rate = audio.sample_rate;
  out.samples.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto left = static_cast<std::size_t>(pos);
    if (left + 1 >= n) {
      out.samples[i] = audio.samples[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(left);
    out.samples[i] = static_cast<float>((1.0 - frac) * audio.samples[left] + frac * audio.samples[left + 1]);
  }
  return out;
}

AudioBuffer fit_to_canvas(const AudioBuffer& audio, std::size_t length) {
  AudioBuffer out;
  out.sample_rate = audio.sample_rate;
  out.samples.assign(length, 0.0f);
  const std::size_t n = audio.size();
  if (n >= length) {
    std::copy(audio.samples.end() - static_cast<std::ptrdiff_t>(length), audio.samples.end(),
              out.samples.begin());
  } else {
    std::copy(audio.samples.begin(), audio.samples.end(),
              out.samples.begin() + static_cast<std::ptrdiff_t>(length - n));
  }
  return out;
}

PairRatios draw_ratios(const AugmentSpec& spec, Rng& rng) {
  PairRatios r;
  r.speed = rng.uniform(spec.speed.lo, spec.speed.hi);
  r.volume = rng.uniform(spec.volume.lo, spec.volume.hi);
  return r;
}

Rng pair_rng(std::uint64_t seed, std::string_view utterance_id) {
  return Rng(derive_seed(seed, std::string("pair:") + std::string(utterance_id)));
}

FeaturePair make_pair(const AudioBuffer& audio, const AugmentSpec& spec, PairRatios ratios,
                      const FrontendConfig& frontend) {
  spec.validate();
  const std::size_t canvas = spec.canvas_samples(audio.sample_rate);
  const AudioBuffer augmented = volume_perturb(speed_perturb(audio, ratios.speed), ratios.volume);
  FeaturePair pair;
  pair.original = log_mel(fit_to_canvas(audio, canvas), frontend);
  pair.augmented = log_mel(fit_to_canvas(augmented, canvas), frontend);
  pair.ratios = ratios;
  return pair;
}

FeaturePair make_pair(const AudioBuffer& audio, const AugmentSpec& spec, Rng& rng,
                      const FrontendConfig& frontend) {
  spec.validate();
  return make_pair(audio, spec, draw_ratios(spec, rng), frontend);
}

}  // namespace kws
