#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "kws/audio.hpp"
#include "kws/random.hpp"

namespace kws {

struct FrontendConfig {
  std::uint32_t sample_rate = kSampleRate;
  std::size_t window = 480;  // 30 ms
  std::size_t hop = 160;     // 10 ms
  std::size_t fft_size = 512;
  std::size_t n_mels = 40;
  double f_min = 20.0;
  double f_max = 8000.0;
  double log_floor = 1e-6;

  void validate() const;
  /// floor((n - window) / hop) + 1; zero when n < window.
  std::size_t frame_count(std::size_t n_samples) const;
};

/// T x n_mels matrix of log-mel energies, row-major.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t frames, std::size_t bins);
  FeatureMatrix(std::size_t frames, std::size_t bins, std::vector<float> values);

  std::size_t frames() const { return frames_; }
  std::size_t bins() const { return bins_; }
  float at(std::size_t t, std::size_t u) const { return values_[t * bins_ + u]; }
  float& at(std::size_t t, std::size_t u) { return values_[t * bins_ + u]; }
  std::span<const float> row(std::size_t t) const { return {values_.data() + t * bins_, bins_}; }
  std::span<float> row(std::size_t t) { return {values_.data() + t * bins_, bins_}; }
  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }

  bool operator==(const FeatureMatrix&) const = default;

 private:
  std::size_t frames_ = 0;
  std::size_t bins_ = 0;
  std::vector<float> values_;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters equally spaced on the HTK mel scale.
class MelFilterbank {
 public:
  explicit MelFilterbank(const FrontendConfig& cfg);

  std::size_t size() const { return centers_hz_.size(); }
  std::size_t n_bins() const { return n_bins_; }
  /// Weights of filter m over the fft_size/2+1 power-spectrum bins.
  std::span<const double> weights(std::size_t m) const { return {weights_.data() + m * n_bins_, n_bins_}; }
  std::span<const double> centers_hz() const { return centers_hz_; }

 private:
  std::size_t n_bins_;
  std::vector<double> weights_;
  std::vector<double> centers_hz_;
};

/// In-place iterative radix-2 FFT. data.size() must be a power of two.
void fft_inplace(std::span<std::complex<double>> data);

/// Hann-windowed power spectrum -> mel filters -> log(max(e, floor)).
FeatureMatrix log_mel(const AudioBuffer& audio, const FrontendConfig& cfg = {});

struct NoiseMix {
  AudioBuffer audio;
  double gain = 0.0;          // alpha applied to the noise segment
  std::size_t noise_offset = 0;
};

/// The noise segment starting at `offset`, tiled cyclically to `length` samples.
std::vector<float> noise_segment(const AudioBuffer& noise, std::size_t offset, std::size_t length);

/// speech + alpha * noise_segment with alpha chosen so the speech-to-noise
/// power ratio equals snr_db. A random offset is drawn when the noise is
/// longer than the speech; shorter noise is tiled.
NoiseMix mix_at_snr(const AudioBuffer& speech, const AudioBuffer& noise, double snr_db, Rng& rng);

}  // namespace kws
