#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "kws/errors.hpp"
#include "kws/frontend.hpp"

namespace kws {

void FrontendConfig::validate() const {
  if (sample_rate == 0 || hop == 0 || window == 0 || n_mels == 0) {
    throw ParameterError("frontend: zero-sized parameter");
  }
  if (window > fft_size) throw ParameterError("frontend: window exceeds FFT size");
  if (hop > window) throw ParameterError("frontend: hop exceeds window");
  if ((fft_size & (fft_size - 1)) != 0) throw ParameterError("frontend: FFT size must be a power of two");
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0)) {
    throw ParameterError("frontend: mel range must satisfy 0 <= f_min < f_max <= Nyquist");
  }
  if (!(log_floor > 0.0)) throw ParameterError("frontend: log floor must be positive");
}

std::size_t FrontendConfig::frame_count(std::size_t n_samples) const {
  if (n_samples < window) return 0;
  return (n_samples - window) / hop + 1;
}

FeatureMatrix::FeatureMatrix(std::size_t frames, std::size_t bins)
    : frames_(frames), bins_(bins), values_(frames * bins, 0.0f) {}

FeatureMatrix::FeatureMatrix(std::size_t frames, std::size_t bins, std::vector<float> values)
    : frames_(frames), bins_(bins), values_(std::move(values)) {
  if (values_.size() != frames * bins) throw ShapeError("feature matrix: value count mismatch");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank::MelFilterbank(const FrontendConfig& cfg) : n_bins_(cfg.fft_size / 2 + 1) {
  cfg.validate();
  const double lo = hz_to_mel(cfg.f_min), hi = hz_to_mel(cfg.f_max);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  }
  weights_.assign(cfg.n_mels * n_bins_, 0.0);
  centers_hz_.resize(cfg.n_mels);
  const double bin_hz = static_cast<double>(cfg.sample_rate) / static_cast<double>(cfg.fft_size);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    centers_hz_[m] = center;
    for (std::size_t k = 0; k < n_bins_; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      weights_[m * n_bins_ + k] = w;
    }
  }
}

void fft_inplace(std::span<std::complex<double>> data) {
  const std::size_t n = data.size();
  if (n == 0 || (n & (n - 1)) != 0) throw ParameterError("fft: size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> step(std::cos(angle), std::sin(angle));
    for (std::size_t start = 0; start < n; start += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto even = data[start + k];
        const auto odd = data[start + k + len / 2] * w;
        data[start + k] = even + odd;
        data[start + k + len / 2] = even - odd;
        w *= step;
      }
    }
  }
}

FeatureMatrix log_mel(const AudioBuffer& audio, const FrontendConfig& cfg) {
  cfg.validate();
  audio.validate();
  const std::size_t frames = cfg.frame_count(audio.size());
  if (frames == 0) {
    throw TooShortError("log_mel: " + std::to_string(audio.size()) +
                        " samples is shorter than one analysis window of " + std::to_string(cfg.window));
  }
  // One filterbank per distinct config is enough; rebuilding is cheap relative to the FFTs.
  const MelFilterbank bank(cfg);
  std::vector<double> window(cfg.window);
  for (std::size_t i = 0; i < cfg.window; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(cfg.window - 1));
  }
  FeatureMatrix out(frames, cfg.n_mels);
  std::vector<std::complex<double>> buf(cfg.fft_size);
  std::vector<double> power(bank.n_bins());
  for (std::size_t t = 0; t < frames; ++t) {
    const float* src = audio.samples.data() + t * cfg.hop;
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t i = 0; i < cfg.window; ++i) buf[i] = window[i] * static_cast<double>(src[i]);
    fft_inplace(buf);
    for (std::size_t k = 0; k < power.size(); ++k) power[k] = std::norm(buf[k]);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
      const auto w = bank.weights(m);
      double e = 0.0;
      for (std::size_t k = 0; k < power.size(); ++k) e += w[k] * power[k];
      out.at(t, m) = static_cast<float>(std::log(std::max(e, cfg.log_floor)));
    }
  }
  return out;
}

}  // namespace kws
