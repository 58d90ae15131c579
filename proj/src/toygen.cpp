#include "kws/toygen.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "kws/errors.hpp"

namespace kws {

AudioBuffer toy_keyword(std::size_t word_index, Rng& rng, std::size_t samples) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double fs = kSampleRate;
  const std::size_t kind = word_index % 4;
  const double base = 350.0 * (1.0 + 0.6 * static_cast<double>(word_index / 4)) * rng.uniform(0.93, 1.07);
  const double length = rng.uniform(0.45, 0.7);
  const double onset = rng.uniform(0.05, 0.95 - length);
  const double level = rng.uniform(0.25, 0.6);

  AudioBuffer out;
  out.samples.assign(samples, 0.0f);
  double phase = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double t = static_cast<double>(i) / fs - onset;
    double v = 0.0;
    if (t >= 0.0 && t < length) {
      const double u = t / length;
      double f = base;
      double amp = 1.0;
      switch (kind) {
        case 0:  // rising chirp
          f = base * (1.0 + 2.0 * u);
          break;
        case 1:  // falling chirp
          f = base * (3.0 - 2.0 * u);
          break;
        case 2:  // alternating two-tone
          f = std::fmod(u * 4.0, 1.0) < 0.5 ? base : 2.5 * base;
          break;
        default:  // amplitude-modulated steady tone
          f = 4.0 * base;
          amp = 0.5 + 0.5 * std::sin(two_pi * 8.0 * t);
          break;
      }
      phase += two_pi * f / fs;
      const double envelope = std::sin(std::numbers::pi * u);
      v = level * envelope * amp * (std::sin(phase) + 0.3 * std::sin(2.0 * phase));
    }
    out.samples[i] = static_cast<float>(v + 0.003 * rng.normal());
  }
  return out;
}

AudioBuffer toy_noise(Rng& rng, std::size_t samples) {
  AudioBuffer out;
  out.samples.resize(samples);
  double state = 0.0;
  for (auto& s : out.samples) {
    state = 0.9 * state + 0.1 * rng.normal();
    s = static_cast<float>(0.3 * state);
  }
  return out;
}

ToyCorpusSummary generate_toy_corpus(const std::filesystem::path& root, const ToyCorpusSpec& spec) {
  if (spec.words.empty()) throw ParameterError("toygen: need at least one word");
  if (spec.clips_per_word == 0) throw ParameterError("toygen: clips_per_word must be positive");
  namespace fs = std::filesystem;
  ToyCorpusSummary summary;
  for (std::size_t w = 0; w < spec.words.size(); ++w) {
    const auto dir = root / spec.words[w];
    fs::create_directories(dir);
    Rng rng(derive_seed(spec.seed, "toy/" + spec.words[w]));
    for (std::size_t k = 0; k < spec.clips_per_word; ++k) {
      char speaker[17];
      std::snprintf(speaker, sizeof speaker, "%08llx",
                    static_cast<unsigned long long>(mix64(derive_seed(spec.seed, spec.words[w]) + k) & 0xffffffffULL));
      write_wav_file(dir / (std::string(speaker) + "_nohash_0.wav"), toy_keyword(w, rng));
      ++summary.clips;
    }
  }
  if (spec.noise_files > 0) {
    const auto dir = root / "_background_noise_";
    fs::create_directories(dir);
    Rng rng(derive_seed(spec.seed, "toy/noise"));
    const auto n = static_cast<std::size_t>(spec.noise_seconds * kSampleRate);
    for (std::size_t k = 0; k < spec.noise_files; ++k) {
      write_wav_file(dir / ("noise_" + std::to_string(k) + ".wav"), toy_noise(rng, n));
      ++summary.noise_files;
    }
  }
  return summary;
}

}  // namespace kws
