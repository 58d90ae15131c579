#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kws/audio.hpp"
#include "kws/random.hpp"

namespace kws {

/// Synthetic keyword corpus laid out like a word-folder dataset: one folder
/// per word holding 1 s clips named <speaker>_nohash_0.wav, plus a
/// _background_noise_ folder of longer noise files.
struct ToyCorpusSpec {
  std::vector<std::string> words{"yes", "no", "up", "down"};
  std::size_t clips_per_word = 50;
  std::size_t noise_files = 2;
  double noise_seconds = 5.0;
  std::uint64_t seed = 0;
};

struct ToyCorpusSummary {
  std::size_t clips = 0;
  std::size_t noise_files = 0;
};

/// Tone/chirp "keyword" for a word index: the pattern family and base
/// frequency follow from the index, while timing, pitch and level are jittered.
AudioBuffer toy_keyword(std::size_t word_index, Rng& rng, std::size_t samples = kSampleRate);

/// Low-passed random noise.
AudioBuffer toy_noise(Rng& rng, std::size_t samples);

ToyCorpusSummary generate_toy_corpus(const std::filesystem::path& root, const ToyCorpusSpec& spec = {});

}  // namespace kws
