#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "helpers.hpp"
#include "kws/dataset.hpp"

using namespace kws;
namespace fs = std::filesystem;

namespace {

void write_clips(const fs::path& dir, std::size_t n, std::size_t samples = 16000, const std::string& prefix = "spk") {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < n; ++i) {
    write_wav_file(dir / (prefix + std::to_string(i) + "_nohash_0.wav"), test::noise(samples, i + 1, 0.1));
  }
}

std::vector<LabeledExample> examples_with_labels(const std::vector<std::size_t>& labels) {
  std::vector<LabeledExample> out;
  for (std::size_t i = 0; i < labels.size(); ++i) out.push_back({"u" + std::to_string(i), FeatureMatrix(2, 2), labels[i]});
  return out;
}

}  // namespace

TEST(LabelMap, DefaultClasses) {
  const LabelMap m;
  EXPECT_EQ(m.size(), 12u);
  EXPECT_EQ(m.folder_label("yes"), 0u);
  EXPECT_EQ(m.folder_label("go"), 9u);
  EXPECT_EQ(m.folder_label("cat"), m.unknown_id());
  EXPECT_EQ(m.name(m.silence_id()), "silence");
  EXPECT_EQ(m.id("unknown"), 10u);
  EXPECT_THROW(m.id("bogus"), DataError);
}

TEST(Scan, TargetFolderRecords) {
  test::TempDir dir("scan");
  write_clips(dir.path() / "yes", 10);
  const auto ds = scan_dataset(dir.path());
  ASSERT_EQ(ds.records.size(), 10u);
  for (const auto& r : ds.records) {
    EXPECT_EQ(r.label, 0u);
    EXPECT_TRUE(r.id.starts_with("yes/"));
  }
}

TEST(Scan, NonTargetFolderIsUnknown) {
  test::TempDir dir("scan");
  write_clips(dir.path() / "yes", 2);
  write_clips(dir.path() / "cat", 3);
  const auto ds = scan_dataset(dir.path());
  EXPECT_EQ(ds.label_counts()[ds.labels.unknown_id()], 3u);
}

TEST(Scan, SilenceCropsFromNoiseFolder) {
  test::TempDir dir("scan");
  write_clips(dir.path() / "yes", 20);
  write_clips(dir.path() / "_background_noise_", 1, 48000, "noise");
  const auto ds = scan_dataset(dir.path());
  EXPECT_EQ(ds.records.size(), 22u);
  EXPECT_EQ(ds.label_counts()[ds.labels.silence_id()], 2u);
  for (const auto& r : ds.records) {
    if (r.label != ds.labels.silence_id()) continue;
    ASSERT_TRUE(r.start.has_value());
    EXPECT_EQ(load_record_audio(r).size(), kSegmentSamples);
  }
}

TEST(Scan, EmptyOrMissingRootRejected) {
  test::TempDir dir("scan");
  EXPECT_THROW(scan_dataset(dir.path()), DataError);
  EXPECT_THROW(scan_dataset(dir.path() / "nope"), DataError);
  write_clips(dir.path() / "cat", 2);
  try {
    scan_dataset(dir.path());
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("cat"), std::string::npos);
  }
}

TEST(Split, BandsWithinThreePercent) {
  std::array<std::size_t, 3> counts{};
  for (int i = 0; i < 1000; ++i) ++counts[static_cast<int>(split_for("w/speaker" + std::to_string(i) + "_nohash_0"))];
  EXPECT_NEAR(static_cast<double>(counts[0]), 800, 30);
  EXPECT_NEAR(static_cast<double>(counts[1]), 100, 30);
  EXPECT_NEAR(static_cast<double>(counts[2]), 100, 30);
}

TEST(Split, KeyedOnSpeakerNotFolder) {
  EXPECT_EQ(speaker_key("yes/0a1b2c3d_nohash_2"), "0a1b2c3d");
  EXPECT_EQ(speaker_key("yes/plain"), "plain");
  for (int i = 0; i < 50; ++i) {
    const auto spk = "s" + std::to_string(i);
    EXPECT_EQ(split_for("yes/" + spk + "_nohash_0"), split_for("cat/" + spk + "_nohash_3"));
    EXPECT_EQ(split_for("yes/" + spk + "_nohash_0"), split_for("yes/" + spk + "_nohash_0"));
  }
}

TEST(Split, HashBandOracle) {
  for (int i = 0; i < 200; ++i) {
    const auto key = "k" + std::to_string(i);
    const auto h = fnv1a64(key) % 100;
    const Split expected = h < 80 ? Split::train : h < 90 ? Split::dev : Split::eval;
    EXPECT_EQ(split_for("w/" + key + "_nohash_0"), expected);
  }
}

TEST(Segments, CountsFollowWholeSeconds) {
  test::TempDir dir("seg");
  fs::create_directories(dir.path() / "a");
  write_wav_file(dir.path() / "a" / "long.wav", test::noise(168000, 1));   // 10.5 s
  write_wav_file(dir.path() / "a" / "short.wav", test::noise(12800, 2));   // 0.8 s
  write_wav_file(dir.path() / "b.wav", test::noise(40000, 3));             // 2.5 s
  const auto corpus = segment_unlabeled(dir.path());
  EXPECT_EQ(corpus.segments.size(), 12u);
  EXPECT_EQ(corpus.skipped_files, 1u);
  std::set<std::string> ids;
  for (const auto& s : corpus.segments) {
    ids.insert(s.id());
    EXPECT_EQ(load_segment(s).size(), kSegmentSamples);
  }
  EXPECT_EQ(ids.size(), corpus.segments.size());
}

TEST(Batches, LastShortBatchKept) {
  IndexBatcher b(1005, 200, 1);
  std::vector<std::size_t> sizes;
  std::set<std::size_t> seen;
  for (std::size_t k = 0; k < b.batches_per_epoch(); ++k) {
    const auto batch = b.next();
    sizes.push_back(batch.size());
    seen.insert(batch.begin(), batch.end());
  }
  EXPECT_EQ(sizes, (std::vector<std::size_t>{200, 200, 200, 200, 200, 5}));
  EXPECT_EQ(seen.size(), 1005u);
}

TEST(Batches, SeedFixesOrder) {
  EXPECT_EQ(IndexBatcher::epoch_batches(50, 7, 3, 0), IndexBatcher::epoch_batches(50, 7, 3, 0));
  EXPECT_NE(IndexBatcher::epoch_batches(50, 7, 3, 0), IndexBatcher::epoch_batches(50, 7, 4, 0));
  EXPECT_NE(IndexBatcher::epoch_batches(50, 7, 3, 0), IndexBatcher::epoch_batches(50, 7, 3, 1));
  IndexBatcher it(50, 7, 3);
  for (const auto& expected : IndexBatcher::epoch_batches(50, 7, 3, 0)) EXPECT_EQ(it.next(), expected);
}

TEST(Batches, UnknownSubsampled) {
  std::vector<std::size_t> labels(100, 0);
  labels.resize(1000, 10);  // 900 unknown
  const auto ex = examples_with_labels(labels);
  SupervisedBatches batches(ex, 10, 50, 1, BalanceOptions{0.1});
  std::size_t unknown = 0, total = 0;
  for (auto b = batches.next(); batches.epoch() == 0; b = batches.next()) {
    for (const auto* e : b.items) {
      ++total;
      unknown += e->label == 10;
    }
  }
  EXPECT_GT(total, 100u);
  EXPECT_NEAR(static_cast<double>(unknown) / total, 0.1, 0.02);
}

TEST(Batches, PairsTraceToOneUtterance) {
  std::vector<Utterance> utts;
  for (int i = 0; i < 5; ++i) utts.push_back({"u" + std::to_string(i), test::noise(16000, i + 10, 0.2)});
  const auto first_audio = utts[0].audio;
  PairBatches pairs(utts, AugmentSpec{}, FrontendConfig{}, 2, 9);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto rng = pair_rng(9, pairs.id(i));
    const auto ratios = draw_ratios(AugmentSpec{}, rng);
    const auto& p = pairs.pair(i);
    EXPECT_EQ(p.ratios.speed, ratios.speed);
    EXPECT_EQ(p.ratios.volume, ratios.volume);
  }
  const auto rebuilt = make_pair(first_audio, AugmentSpec{}, pairs.pair(0).ratios);
  EXPECT_EQ(rebuilt.original, pairs.pair(0).original);
  EXPECT_EQ(rebuilt.augmented, pairs.pair(0).augmented);
  std::size_t seen = 0;
  for (int k = 0; k < 3; ++k) seen += pairs.next().size();
  EXPECT_EQ(seen, 5u);
}

TEST(Manifest, RoundTrip) {
  test::TempDir dir("manifest");
  write_clips(dir.path() / "data" / "yes", 4);
  write_clips(dir.path() / "data" / "bed", 2);
  write_clips(dir.path() / "data" / "_background_noise_", 1, 40000, "n");
  ScanOptions opts;
  opts.silence_per_labeled = 0.5;
  const auto ds = scan_dataset(dir.path() / "data", {}, opts);
  write_manifest(dir.path() / "manifest.tsv", ds);
  const auto back = read_manifest(dir.path() / "manifest.tsv");
  ASSERT_EQ(back.records.size(), ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    EXPECT_EQ(back.records[i].id, ds.records[i].id);
    EXPECT_EQ(back.records[i].label, ds.records[i].label);
    EXPECT_EQ(back.records[i].split, ds.records[i].split);
    EXPECT_EQ(back.records[i].start, ds.records[i].start);
    EXPECT_EQ(load_record_audio(back.records[i]).samples, load_record_audio(ds.records[i]).samples);
  }
}

TEST(Manifest, MalformedRowsRejected) {
  test::TempDir dir("manifest");
  {
    std::ofstream f(dir.path() / "m.tsv");
    f << "id\tpath\tlabel\tsplit\nyes/a\ta.wav\tyes\n";
  }
  EXPECT_THROW(read_manifest(dir.path() / "m.tsv"), FormatError);
  {
    std::ofstream f(dir.path() / "m.tsv");
    f << "id\tpath\tlabel\tsplit\nyes/a\ta.wav\tyes\ttrain\nyes/a\tb.wav\tyes\ttrain\n";
  }
  EXPECT_THROW(read_manifest(dir.path() / "m.tsv"), FormatError);
}

TEST(FeatureArchive, RoundTrip) {
  test::TempDir dir("archive");
  std::vector<LabeledExample> ex;
  Rng rng(1);
  for (int i = 0; i < 4; ++i) {
    FeatureMatrix f(10 + i, 40);
    for (auto& v : f.values()) v = static_cast<float>(rng.uniform(-13, 3));
    ex.push_back({"w/u" + std::to_string(i), f, static_cast<std::size_t>(i)});
  }
  write_feature_archive(dir.path() / "train", ex);
  const auto back = read_feature_archive(dir.path() / "train");
  ASSERT_EQ(back.size(), ex.size());
  for (std::size_t i = 0; i < ex.size(); ++i) {
    EXPECT_EQ(back[i].id, ex[i].id);
    EXPECT_EQ(back[i].label, ex[i].label);
    EXPECT_EQ(back[i].features, ex[i].features);
  }
}

TEST(Corrupt, DeterministicAndNoisy) {
  const auto speech = test::sine(500, 16000);
  const std::vector<AudioBuffer> noises{test::noise(40000, 1), test::noise(30000, 2)};
  CorruptOptions opts;
  opts.seed = 4;
  const auto a = corrupt(speech, "yes/x", noises, opts);
  const auto b = corrupt(speech, "yes/x", noises, opts);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, speech.samples);
  EXPECT_NE(corrupt(speech, "yes/y", noises, opts).samples, a.samples);
}
