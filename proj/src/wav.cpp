#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "kws/audio.hpp"
#include "kws/errors.hpp"

namespace kws {
namespace {

std::uint16_t le16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t le32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::equal(tag, tag + 4, b.begin() + static_cast<std::ptrdiff_t>(at));
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

void AudioBuffer::validate() const {
  if (samples.empty()) throw DataError("audio: buffer has no samples");
  if (sample_rate == 0) throw DataError("audio: sample rate must be positive");
}

double mean_power(std::span<const float> samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (float s : samples) total += static_cast<double>(s) * s;
  return total / static_cast<double>(samples.size());
}

double rms(std::span<const float> samples) { return std::sqrt(mean_power(samples)); }

AudioBuffer read_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
    throw FormatError("wav: missing RIFF/WAVE header");
  }
  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint32_t size = le32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) {
      throw FormatError("wav: truncated chunk '" + std::string(bytes.begin() + pos, bytes.begin() + pos + 4) +
                        "' (declares " + std::to_string(size) + " bytes)");
    }
    if (tag_is(bytes, pos, "fmt ")) {
      if (size < 16) throw FormatError("wav: fmt chunk too small");
      const std::uint16_t format = le16(bytes, body);
      channels = le16(bytes, body + 2);
      rate = le32(bytes, body + 4);
      bits = le16(bytes, body + 14);
      if (format != 1) throw FormatError("wav: audio_format " + std::to_string(format) + " is not PCM (1)");
      if (channels != 1) {
        throw FormatError("wav: num_channels is " + std::to_string(channels) + ", only mono is supported");
      }
      if (bits != 16) throw FormatError("wav: bits_per_sample is " + std::to_string(bits) + ", expected 16");
      if (rate != kSampleRate) {
        throw FormatError("wav: sample_rate is " + std::to_string(rate) +
                          " Hz, expected 16000; resample first (speed perturbation with ratio "
                          "rate/16000 realizes the conversion)");
      }
      have_fmt = true;
    } else if (tag_is(bytes, pos, "data")) {
      if (!have_fmt) throw FormatError("wav: data chunk precedes fmt chunk");
      if (size < 2) throw FormatError("wav: data chunk is empty");
      AudioBuffer audio;
      audio.sample_rate = rate;
      audio.samples.resize(size / 2);
      for (std::size_t i = 0; i < audio.samples.size(); ++i) {
        const auto v = static_cast<std::int16_t>(le16(bytes, body + 2 * i));
        audio.samples[i] = static_cast<float>(v) / 32768.0f;
      }
      return audio;
    }
    pos = body + size + (size & 1u);
  }
  throw FormatError(have_fmt ? "wav: no data chunk" : "wav: no fmt chunk");
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

AudioBuffer read_wav_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return read_wav(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

WavWriteResult encode_wav(const AudioBuffer& audio) {
  WavWriteResult result;
  auto& out = result.bytes;
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, audio.sample_rate);
  put32(out, audio.sample_rate * 2);
  put16(out, 2);
  put16(out, 16);
  put_tag(out, "data");
  put32(out, data_bytes);
  for (float s : audio.samples) {
    float scaled = s * 32768.0f;
    if (scaled > 32767.0f || scaled < -32768.0f) {
      ++result.clamped;
      scaled = std::clamp(scaled, -32768.0f, 32767.0f);
    }
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lrint(scaled))));
  }
  return result;
}

std::size_t write_wav_file(const std::filesystem::path& path, const AudioBuffer& audio) {
  const auto encoded = encode_wav(audio);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(encoded.bytes.data()),
            static_cast<std::streamsize>(encoded.bytes.size()));
  return encoded.clamped;
}

}  // namespace kws
