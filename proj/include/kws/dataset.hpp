#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kws/audio.hpp"
#include "kws/augment.hpp"
#include "kws/frontend.hpp"
#include "kws/random.hpp"

namespace kws {

/// Target words followed by the two reserved classes. With the default ten
/// words, unknown is id 10 and silence is id 11.
class LabelMap {
 public:
  LabelMap();
  explicit LabelMap(std::vector<std::string> words);

  std::size_t size() const { return words_.size() + 2; }
  std::size_t unknown_id() const { return words_.size(); }
  std::size_t silence_id() const { return words_.size() + 1; }
  const std::vector<std::string>& words() const { return words_; }

  /// Target id for a folder name, unknown_id() for anything else.
  std::size_t folder_label(std::string_view folder) const;
  bool is_target(std::string_view folder) const;
  std::string name(std::size_t id) const;
  /// Inverse of name(); throws DataError on an unrecognized name.
  std::size_t id(std::string_view name) const;

 private:
  std::vector<std::string> words_;
};

enum class Split { train, dev, eval };

const char* split_name(Split s);
Split parse_split(std::string_view s);

/// Upper edges of the train and dev bands on a 0..99 hash scale.
struct SplitBands {
  unsigned train_end = 80;
  unsigned dev_end = 90;

  void validate() const;
};

/// Part of the file name before "_nohash_" (the speaker), else the whole stem.
std::string speaker_key(std::string_view utterance_id);
/// fnv1a64(speaker_key(id)) mod 100, mapped onto the bands.
Split split_for(std::string_view utterance_id, const SplitBands& bands = {});

struct Record {
  std::string id;
  std::filesystem::path path;
  std::optional<std::size_t> start;  // crop offset in samples; whole file when empty
  std::size_t label = 0;
  Split split = Split::train;
};

struct Dataset {
  LabelMap labels;
  std::vector<Record> records;

  std::array<std::size_t, 3> split_counts() const;
  std::vector<std::size_t> label_counts() const;
  std::vector<const Record*> in_split(Split s) const;
};

struct ScanOptions {
  std::uint64_t seed = 0;
  double silence_per_labeled = 0.1;  // silence clips per labeled clip
  std::string noise_folder = "_background_noise_";
  SplitBands bands;
};

/// Walks root/<word>/*.wav. Silence records are 1 s crops of the noise folder's
/// files at seeded offsets. Throws DataError when the root is missing, empty,
/// or has no target-word folder.
Dataset scan_dataset(const std::filesystem::path& root, const LabelMap& labels = {}, const ScanOptions& opts = {});

/// Samples of a record: the whole file, or a 1 s crop when `start` is set.
AudioBuffer load_record_audio(const Record& r);

/// Manifest rows: id, path, label name, split. Crops are written as "path@start".
void write_manifest(const std::filesystem::path& file, const Dataset& ds);
Dataset read_manifest(const std::filesystem::path& file, const LabelMap& labels = {});

struct Segment {
  std::filesystem::path path;
  std::size_t start = 0;

  std::string id() const;
};

struct UnlabeledCorpus {
  std::vector<Segment> segments;
  std::size_t skipped_files = 0;  // files under one second
};

inline constexpr std::size_t kSegmentSamples = 16000;

/// Non-overlapping 1 s windows over every WAV below root, in path order. The
/// trailing remainder of each file is dropped.
UnlabeledCorpus segment_unlabeled(const std::filesystem::path& root);
AudioBuffer load_segment(const Segment& s);

/// Feature matrix of a utterance as it enters the network.
struct LabeledExample {
  std::string id;
  FeatureMatrix features;
  std::size_t label = 0;
};

/// Waveform used to build augmentation pairs.
struct Utterance {
  std::string id;
  AudioBuffer audio;
};

/// Shuffled index batches over [0, n). Each epoch is a fresh seeded
/// permutation; the last short batch of an epoch is kept.
class IndexBatcher {
 public:
  IndexBatcher(std::size_t n, std::size_t batch_size, std::uint64_t seed);

  std::vector<std::size_t> next();
  std::size_t epoch() const { return epoch_; }
  std::size_t batches_per_epoch() const { return (order_.size() + batch_ - 1) / batch_; }

  /// Batches of a whole epoch, computed without touching iterator state.
  static std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                             std::uint64_t seed, std::size_t epoch);

 private:
  std::size_t batch_;
  std::uint64_t seed_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

struct SupervisedBatch {
  std::vector<const LabeledExample*> items;
};

struct BalanceOptions {
  /// Target share of unknown-class items per epoch; 1 keeps every item.
  double unknown_fraction = 0.1;
};

/// Supervised mode: examples in seeded order, with unknown-class items
/// subsampled per epoch down to the configured share.
class SupervisedBatches {
 public:
  SupervisedBatches(const std::vector<LabeledExample>& examples, std::size_t unknown_id, std::size_t batch_size,
                    std::uint64_t seed, BalanceOptions balance = {});

  SupervisedBatch next();
  std::size_t epoch() const { return epoch_; }

 private:
  void start_epoch();

  const std::vector<LabeledExample>& examples_;
  std::size_t unknown_id_;
  std::size_t batch_;
  std::uint64_t seed_;
  BalanceOptions balance_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

/// Pairs mode: each utterance's pair is built once from pair_rng(seed, id) and
/// reused across epochs.
class PairBatches {
 public:
  PairBatches(std::vector<Utterance> utterances, const AugmentSpec& spec, const FrontendConfig& frontend,
              std::size_t batch_size, std::uint64_t seed);

  std::vector<const FeaturePair*> next();
  const FeaturePair& pair(std::size_t i);
  std::size_t size() const { return utterances_.size(); }
  const std::string& id(std::size_t i) const { return utterances_[i].id; }
  std::size_t epoch() const { return batcher_.epoch(); }

 private:
  std::vector<Utterance> utterances_;
  AugmentSpec spec_;
  FrontendConfig frontend_;
  std::uint64_t seed_;
  IndexBatcher batcher_;
  std::vector<std::optional<FeaturePair>> cache_;
};

/// Canvas-fits and featurizes one waveform.
FeatureMatrix canvas_features(const AudioBuffer& audio, const AugmentSpec& spec = {},
                              const FrontendConfig& frontend = {});

struct CorruptOptions {
  std::uint64_t seed = 0;
  double snr_min_db = 0.0;
  double snr_max_db = 20.0;
};

/// Mixes one noise file, picked per (seed, id), at an SNR drawn from
/// U(snr_min, snr_max). Same inputs give the same output.
AudioBuffer corrupt(const AudioBuffer& speech, std::string_view id, const std::vector<AudioBuffer>& noises,
                    const CorruptOptions& opts);

/// Every WAV directly under `dir`, sorted by name; throws DataError when none.
std::vector<AudioBuffer> load_noise_dir(const std::filesystem::path& dir);

/// Feature archive of one split: a tensor container holding one T x 40 tensor
/// per utterance, plus a TSV index of (id, label id, frames).
void write_feature_archive(const std::filesystem::path& stem, const std::vector<LabeledExample>& examples);
std::vector<LabeledExample> read_feature_archive(const std::filesystem::path& stem);

}  // namespace kws
