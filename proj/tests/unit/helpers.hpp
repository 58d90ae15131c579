#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>

#include "kws/audio.hpp"
#include "kws/model.hpp"
#include "kws/random.hpp"

namespace kws::test {

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(fnv1a64(tag) ^ static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()));
    path_ = std::filesystem::temp_directory_path() / ("kws_" + tag + "_" + std::to_string(rng.next() % 1000000007));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline AudioBuffer sine(double hz, std::size_t n, double amplitude = 0.5) {
  AudioBuffer a;
  a.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    a.samples[i] = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / kSampleRate));
  }
  return a;
}

inline AudioBuffer noise(std::size_t n, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed);
  AudioBuffer a;
  a.samples.resize(n);
  for (auto& s : a.samples) s = static_cast<float>(scale * rng.normal());
  return a;
}

// Narrow network over 40 mel bins: 4 channels x 10 bins = width 40.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.conv_channels = 4;
  c.d_model = 40;
  c.n_heads = 2;
  c.d_ff = 32;
  c.d_bottleneck = 32;
  return c;
}

}  // namespace kws::test
