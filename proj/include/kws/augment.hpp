#pragma once

#include <string_view>
#include <utility>

#include "kws/audio.hpp"
#include "kws/frontend.hpp"
#include "kws/random.hpp"

namespace kws {

struct Range {
  double lo = 1.0;
  double hi = 1.0;
};

struct AugmentSpec {
  Range speed{0.8, 1.2};
  Range volume{0.5, 1.5};
  double canvas_seconds = 1.25;

  /// Ranges must be positive intervals (lo <= hi) containing 1.
  void validate() const;
  std::size_t canvas_samples(std::uint32_t sample_rate = kSampleRate) const;
};

/// Multiplies every sample by `ratio` (> 0). No clipping.
AudioBuffer volume_perturb(const AudioBuffer& audio, double ratio);

/// Time-axis scaling A(ratio * t) by linear interpolation. The output has
/// round(n / ratio) samples and output[i] samples the input at i * ratio,
/// holding the last sample past the end. Pitch moves with speed.
AudioBuffer speed_perturb(const AudioBuffer& audio, double ratio);

/// Left-pads with zeros, or drops leading samples, to exactly `length`
/// samples so the utterance ends at the last frame.
AudioBuffer fit_to_canvas(const AudioBuffer& audio, std::size_t length);

struct PairRatios {
  double speed = 1.0;
  double volume = 1.0;
};

struct FeaturePair {
  FeatureMatrix original;
  FeatureMatrix augmented;
  PairRatios ratios;
};

/// Draws speed then volume from the spec's ranges.
PairRatios draw_ratios(const AugmentSpec& spec, Rng& rng);

/// Generator whose stream depends only on (seed, utterance id).
Rng pair_rng(std::uint64_t seed, std::string_view utterance_id);

/// Builds (X, X^aug): X^aug = volume(speed(audio)); both are canvassed and featurized.
FeaturePair make_pair(const AudioBuffer& audio, const AugmentSpec& spec, Rng& rng,
                      const FrontendConfig& frontend = {});
FeaturePair make_pair(const AudioBuffer& audio, const AugmentSpec& spec, PairRatios ratios,
                      const FrontendConfig& frontend = {});

}  // namespace kws
