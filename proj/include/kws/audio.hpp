#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace kws {

inline constexpr std::uint32_t kSampleRate = 16000;

/// Mono waveform. Samples nominally lie in [-1, 1]; augmentation may push
/// them outside, and only WAV writing clamps.
struct AudioBuffer {
  std::vector<float> samples;
  std::uint32_t sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
  double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
  /// Throws DataError unless there is at least one sample and a positive rate.
  void validate() const;
};

/// Mean squared amplitude.
double mean_power(std::span<const float> samples);
double rms(std::span<const float> samples);

/// Parses a RIFF/WAVE PCM16 mono 16 kHz file image.
AudioBuffer read_wav(std::span<const std::uint8_t> bytes);
AudioBuffer read_wav_file(const std::filesystem::path& path);

struct WavWriteResult {
  std::vector<std::uint8_t> bytes;
  /// Samples outside [-1, 1] that were clamped on the way out.
  std::size_t clamped = 0;
};

/// Encodes PCM16 mono. Samples are scaled by 32768 and clamped to the int16 range.
WavWriteResult encode_wav(const AudioBuffer& audio);
std::size_t write_wav_file(const std::filesystem::path& path, const AudioBuffer& audio);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace kws
