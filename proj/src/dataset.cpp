#include "kws/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "kws/container.hpp"
#include "kws/errors.hpp"

namespace kws {
namespace fs = std::filesystem;

namespace {

std::vector<fs::path> wav_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto tab = line.find('\t', pos);
    out.push_back(line.substr(pos, tab - pos));
    if (tab == std::string::npos) break;
    pos = tab + 1;
  }
  return out;
}

std::size_t parse_size(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw FormatError("bad " + what + " '" + s + "'");
  return static_cast<std::size_t>(v);
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

LabelMap::LabelMap() : LabelMap({"yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go"}) {}

LabelMap::LabelMap(std::vector<std::string> words) : words_(std::move(words)) {
  if (words_.empty()) throw ParameterError("label map needs at least one target word");
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (words_[i] == "unknown" || words_[i] == "silence") {
      throw ParameterError("'" + words_[i] + "' is a reserved class name");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (words_[i] == words_[j]) throw ParameterError("duplicate target word '" + words_[i] + "'");
    }
  }
}

bool LabelMap::is_target(std::string_view folder) const {
  return std::find(words_.begin(), words_.end(), folder) != words_.end();
}

std::size_t LabelMap::folder_label(std::string_view folder) const {
  const auto it = std::find(words_.begin(), words_.end(), folder);
  return it == words_.end() ? unknown_id() : static_cast<std::size_t>(it - words_.begin());
}

std::string LabelMap::name(std::size_t id) const {
  if (id < words_.size()) return words_[id];
  if (id == unknown_id()) return "unknown";
  if (id == silence_id()) return "silence";
  throw DataError("label id " + std::to_string(id) + " out of range");
}

std::size_t LabelMap::id(std::string_view name) const {
  if (name == "unknown") return unknown_id();
  if (name == "silence") return silence_id();
  const auto it = std::find(words_.begin(), words_.end(), name);
  if (it == words_.end()) throw DataError("unknown label '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - words_.begin());
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::dev:
      return "dev";
    case Split::eval:
      return "eval";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "eval") return Split::eval;
  throw ParameterError("unknown split '" + std::string(s) + "' (expected train, dev or eval)");
}

void SplitBands::validate() const {
  if (!(train_end <= dev_end && dev_end <= 100)) {
    throw ParameterError("split bands must satisfy train_end <= dev_end <= 100");
  }
}

std::string speaker_key(std::string_view utterance_id) {
  const auto slash = utterance_id.find_last_of('/');
  std::string_view name = slash == std::string_view::npos ? utterance_id : utterance_id.substr(slash + 1);
  const auto cut = name.find("_nohash_");
  if (cut != std::string_view::npos) return std::string(name.substr(0, cut));
  if (name.ends_with(".wav")) name.remove_suffix(4);
  return std::string(name);
}

Split split_for(std::string_view utterance_id, const SplitBands& bands) {
  const auto bucket = fnv1a64(speaker_key(utterance_id)) % 100;
  if (bucket < bands.train_end) return Split::train;
  if (bucket < bands.dev_end) return Split::dev;
  return Split::eval;
}

std::array<std::size_t, 3> Dataset::split_counts() const {
  std::array<std::size_t, 3> out{};
  for (const auto& r : records) ++out[static_cast<std::size_t>(r.split)];
  return out;
}

std::vector<std::size_t> Dataset::label_counts() const {
  std::vector<std::size_t> out(labels.size(), 0);
  for (const auto& r : records) ++out.at(r.label);
  return out;
}

std::vector<const Record*> Dataset::in_split(Split s) const {
  std::vector<const Record*> out;
  for (const auto& r : records) {
    if (r.split == s) out.push_back(&r);
  }
  return out;
}

Dataset scan_dataset(const fs::path& root, const LabelMap& labels, const ScanOptions& opts) {
  opts.bands.validate();
  if (!fs::is_directory(root)) throw DataError("dataset root " + root.string() + " is not a directory");
  std::vector<fs::path> folders;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) folders.push_back(e.path());
  }
  std::sort(folders.begin(), folders.end());
  if (folders.empty()) throw DataError("dataset root " + root.string() + " has no word folders");

  Dataset ds;
  ds.labels = labels;
  bool any_target = false;
  std::string seen;
  std::optional<fs::path> noise_dir;
  for (const auto& dir : folders) {
    const auto word = dir.filename().string();
    if (word == opts.noise_folder) {
      noise_dir = dir;
      continue;
    }
    seen += (seen.empty() ? "" : ", ") + word;
    if (labels.is_target(word)) any_target = true;
    for (const auto& f : wav_files(dir)) {
      Record r;
      r.id = word + "/" + f.stem().string();
      r.path = f;
      r.label = labels.folder_label(word);
      r.split = split_for(r.id, opts.bands);
      ds.records.push_back(std::move(r));
    }
  }
  if (!any_target) {
    throw DataError("no target-word folders under " + root.string() + "; found: " + (seen.empty() ? "none" : seen));
  }

  const auto labeled = ds.records.size();
  if (noise_dir && opts.silence_per_labeled > 0) {
    std::vector<std::pair<fs::path, std::size_t>> sources;  // file, sample count
    for (const auto& f : wav_files(*noise_dir)) {
      const auto audio = read_wav_file(f);
      if (audio.size() >= kSegmentSamples) sources.emplace_back(f, audio.size());
    }
    const auto quota = static_cast<std::size_t>(std::llround(opts.silence_per_labeled * static_cast<double>(labeled)));
    if (!sources.empty()) {
      Rng rng(derive_seed(opts.seed, "silence"));
      for (std::size_t k = 0; k < quota; ++k) {
        const auto& [file, n] = sources[k % sources.size()];
        Record r;
        r.id = "silence/" + file.stem().string() + "_" + std::to_string(k);
        r.path = file;
        r.start = static_cast<std::size_t>(rng.below(n - kSegmentSamples + 1));
        r.label = labels.silence_id();
        r.split = split_for(r.id, opts.bands);
        ds.records.push_back(std::move(r));
      }
    }
  }
  if (ds.records.empty()) throw DataError("no WAV files under " + root.string());
  return ds;
}

AudioBuffer load_record_audio(const Record& r) {
  auto audio = read_wav_file(r.path);
  if (!r.start) return audio;
  if (*r.start + kSegmentSamples > audio.size()) {
    throw DataError(r.path.string() + ": crop at " + std::to_string(*r.start) + " runs past the end");
  }
  const auto first = audio.samples.begin() + static_cast<std::ptrdiff_t>(*r.start);
  return AudioBuffer{{first, first + kSegmentSamples}, audio.sample_rate};
}

void write_manifest(const fs::path& file, const Dataset& ds) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + file.string());
  out << "id\tpath\tlabel\tsplit\n";
  for (const auto& r : ds.records) {
    out << r.id << '\t' << r.path.generic_string();
    if (r.start) out << '@' << *r.start;
    out << '\t' << ds.labels.name(r.label) << '\t' << split_name(r.split) << '\n';
  }
  if (!out) throw DataError("failed writing manifest " + file.string());
}

Dataset read_manifest(const fs::path& file, const LabelMap& labels) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot read manifest " + file.string());
  Dataset ds;
  ds.labels = labels;
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && line.rfind("id\t", 0) == 0) continue;
    if (line.empty()) continue;
    const auto cols = split_tabs(line);
    const auto where = file.string() + ":" + std::to_string(lineno);
    if (cols.size() != 4) throw FormatError(where + ": expected 4 columns, got " + std::to_string(cols.size()));
    Record r;
    r.id = cols[0];
    std::string path = cols[1];
    if (const auto at = path.rfind('@'); at != std::string::npos) {
      r.start = parse_size(path.substr(at + 1), "crop offset at " + where);
      path.resize(at);
    }
    r.path = fs::path(path).is_absolute() ? fs::path(path) : file.parent_path() / path;
    try {
      r.label = labels.id(cols[2]);
      r.split = parse_split(cols[3]);
    } catch (const Error& e) {
      throw FormatError(where + ": " + e.what());
    }
    if (!seen.emplace(r.id, lineno).second) throw FormatError(where + ": duplicate id " + r.id);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

std::string Segment::id() const { return path.stem().string() + "#" + std::to_string(start); }

UnlabeledCorpus segment_unlabeled(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("unlabeled root " + root.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  UnlabeledCorpus corpus;
  for (const auto& f : files) {
    const auto n = read_wav_file(f).size();
    if (n < kSegmentSamples) {
      ++corpus.skipped_files;
      continue;
    }
    for (std::size_t s = 0; s + kSegmentSamples <= n; s += kSegmentSamples) corpus.segments.push_back({f, s});
  }
  return corpus;
}

AudioBuffer load_segment(const Segment& s) {
  Record r;
  r.path = s.path;
  r.start = s.start;
  return load_record_audio(r);
}

IndexBatcher::IndexBatcher(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : batch_(batch_size), seed_(seed), order_(n) {
  if (n == 0) throw DataError("batching an empty source");
  if (batch_size == 0) throw ParameterError("batch size must be at least 1");
  std::iota(order_.begin(), order_.end(), 0);
  Rng rng(derive_seed(seed_, "epoch0"));
  shuffle(order_, rng);
}

std::vector<std::size_t> IndexBatcher::next() {
  if (cursor_ >= order_.size()) {
    ++epoch_;
    cursor_ = 0;
    std::iota(order_.begin(), order_.end(), 0);
    Rng rng(derive_seed(seed_, "epoch" + std::to_string(epoch_)));
    shuffle(order_, rng);
  }
  const auto end = std::min(cursor_ + batch_, order_.size());
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return out;
}

std::vector<std::vector<std::size_t>> IndexBatcher::epoch_batches(std::size_t n, std::size_t batch_size,
                                                                  std::uint64_t seed, std::size_t epoch) {
  IndexBatcher b(n, batch_size, seed);
  std::vector<std::vector<std::size_t>> out;
  while (true) {
    auto batch = b.next();
    if (b.epoch() > epoch) break;
    if (b.epoch() == epoch) out.push_back(std::move(batch));
  }
  return out;
}

SupervisedBatches::SupervisedBatches(const std::vector<LabeledExample>& examples, std::size_t unknown_id,
                                     std::size_t batch_size, std::uint64_t seed, BalanceOptions balance)
    : examples_(examples), unknown_id_(unknown_id), batch_(batch_size), seed_(seed), balance_(balance) {
  if (examples.empty()) throw DataError("batching an empty source");
  if (batch_size == 0) throw ParameterError("batch size must be at least 1");
  if (!(balance.unknown_fraction > 0 && balance.unknown_fraction <= 1)) {
    throw ParameterError("unknown_fraction must lie in (0, 1]");
  }
  start_epoch();
}

void SupervisedBatches::start_epoch() {
  Rng rng(derive_seed(seed_, "epoch" + std::to_string(epoch_)));
  std::vector<std::size_t> unknown, other;
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    (examples_[i].label == unknown_id_ ? unknown : other).push_back(i);
  }
  std::size_t keep = unknown.size();
  if (balance_.unknown_fraction < 1 && !other.empty()) {
    const double cap = balance_.unknown_fraction / (1 - balance_.unknown_fraction) * static_cast<double>(other.size());
    keep = std::min(keep, static_cast<std::size_t>(std::llround(cap)));
  }
  shuffle(unknown, rng);
  order_ = other;
  order_.insert(order_.end(), unknown.begin(), unknown.begin() + static_cast<std::ptrdiff_t>(keep));
  shuffle(order_, rng);
  cursor_ = 0;
}

SupervisedBatch SupervisedBatches::next() {
  if (cursor_ >= order_.size()) {
    ++epoch_;
    start_epoch();
  }
  SupervisedBatch b;
  const auto end = std::min(cursor_ + batch_, order_.size());
  for (auto i = cursor_; i < end; ++i) b.items.push_back(&examples_[order_[i]]);
  cursor_ = end;
  return b;
}

PairBatches::PairBatches(std::vector<Utterance> utterances, const AugmentSpec& spec, const FrontendConfig& frontend,
                         std::size_t batch_size, std::uint64_t seed)
    : utterances_(std::move(utterances)),
      spec_(spec),
      frontend_(frontend),
      seed_(seed),
      batcher_(utterances_.size(), batch_size, derive_seed(seed, "pairs")),
      cache_(utterances_.size()) {
  spec_.validate();
}

const FeaturePair& PairBatches::pair(std::size_t i) {
  if (!cache_.at(i)) {
    auto rng = pair_rng(seed_, utterances_[i].id);
    cache_[i] = make_pair(utterances_[i].audio, spec_, rng, frontend_);
  }
  return *cache_[i];
}

std::vector<const FeaturePair*> PairBatches::next() {
  std::vector<const FeaturePair*> out;
  for (auto i : batcher_.next()) out.push_back(&pair(i));
  return out;
}

FeatureMatrix canvas_features(const AudioBuffer& audio, const AugmentSpec& spec, const FrontendConfig& frontend) {
  return log_mel(fit_to_canvas(audio, spec.canvas_samples(frontend.sample_rate)), frontend);
}

AudioBuffer corrupt(const AudioBuffer& speech, std::string_view id, const std::vector<AudioBuffer>& noises,
                    const CorruptOptions& opts) {
  if (noises.empty()) throw DataError("corruption requested but no noise files were given");
  if (!(opts.snr_min_db <= opts.snr_max_db)) throw ParameterError("snr_min must not exceed snr_max");
  Rng rng(derive_seed(opts.seed, std::string("corrupt/") + std::string(id)));
  const auto& noise = noises[rng.below(noises.size())];
  const double snr = rng.uniform(opts.snr_min_db, opts.snr_max_db);
  return mix_at_snr(speech, noise, snr, rng).audio;
}

std::vector<AudioBuffer> load_noise_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("noise directory " + dir.string() + " does not exist");
  std::vector<AudioBuffer> out;
  for (const auto& f : wav_files(dir)) out.push_back(read_wav_file(f));
  if (out.empty()) throw DataError("noise directory " + dir.string() + " holds no WAV files");
  return out;
}

void write_feature_archive(const fs::path& stem, const std::vector<LabeledExample>& examples) {
  Container c;
  std::ostringstream index;
  index << "id\tlabel\tframes\n";
  for (const auto& ex : examples) {
    c.entries.push_back(
        {ex.id, {ex.features.frames(), ex.features.bins()}, {ex.features.values().begin(), ex.features.values().end()}});
    index << ex.id << '\t' << ex.label << '\t' << ex.features.frames() << '\n';
  }
  write_container_file(fs::path(stem).concat(".kws"), c);
  std::ofstream out(fs::path(stem).concat(".tsv"), std::ios::binary);
  out << index.str();
  if (!out) throw DataError("failed writing feature index " + stem.string() + ".tsv");
}

std::vector<LabeledExample> read_feature_archive(const fs::path& stem) {
  const auto c = read_container_file(fs::path(stem).concat(".kws"));
  const auto index_path = fs::path(stem).concat(".tsv");
  std::ifstream in(index_path, std::ios::binary);
  if (!in) throw DataError("cannot read feature index " + index_path.string());
  std::vector<LabeledExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (++lineno == 1 || line.empty()) continue;
    const auto cols = split_tabs(line);
    const auto where = index_path.string() + ":" + std::to_string(lineno);
    if (cols.size() != 3) throw FormatError(where + ": expected 3 columns");
    const auto* e = c.find(cols[0]);
    if (!e) throw FormatError(where + ": archive has no tensor " + cols[0]);
    if (e->shape.size() != 2 || e->shape[0] != parse_size(cols[2], "frame count")) {
      throw FormatError(where + ": frame count disagrees with the archive");
    }
    out.push_back({cols[0], FeatureMatrix(e->shape[0], e->shape[1], e->values), parse_size(cols[1], "label")});
  }
  return out;
}

}  // namespace kws
