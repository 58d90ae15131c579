#include <gtest/gtest.h>

#include <cstring>

#include "helpers.hpp"
#include "kws/audio.hpp"
#include "kws/errors.hpp"

using namespace kws;

namespace {

void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back(v >> 8);
}
void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
}
void tag(std::vector<std::uint8_t>& b, const char* t) { b.insert(b.end(), t, t + 4); }

std::vector<std::uint8_t> wav_image(const std::vector<std::int16_t>& samples, std::uint16_t format = 1,
                                    std::uint16_t channels = 1, std::uint32_t rate = 16000) {
  std::vector<std::uint8_t> b;
  tag(b, "RIFF");
  put32(b, 36 + static_cast<std::uint32_t>(samples.size() * 2));
  tag(b, "WAVE");
  tag(b, "fmt ");
  put32(b, 16);
  put16(b, format);
  put16(b, channels);
  put32(b, rate);
  put32(b, rate * channels * 2);
  put16(b, channels * 2);
  put16(b, 16);
  tag(b, "data");
  put32(b, static_cast<std::uint32_t>(samples.size() * 2));
  for (auto s : samples) put16(b, static_cast<std::uint16_t>(s));
  return b;
}

}  // namespace

TEST(ReadWav, HandBuiltImage) {
  const auto a = read_wav(wav_image({0, 16384, -16384, 32767}));
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a.sample_rate, 16000u);
  EXPECT_EQ(a.samples[0], 0.0f);
  EXPECT_EQ(a.samples[1], 0.5f);
  EXPECT_EQ(a.samples[2], -0.5f);
  EXPECT_FLOAT_EQ(a.samples[3], 32767.0f / 32768.0f);
}

TEST(ReadWav, SkipsUnknownChunks) {
  auto b = wav_image({100, -100});
  std::vector<std::uint8_t> extra;
  tag(extra, "LIST");
  put32(extra, 4);
  tag(extra, "INFO");
  b.insert(b.begin() + 36, extra.begin(), extra.end());
  EXPECT_EQ(read_wav(b).size(), 2u);
}

TEST(ReadWav, RejectsStereo) {
  try {
    read_wav(wav_image({1, 2, 3, 4}, 1, 2));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("num_channels"), std::string::npos);
  }
}

TEST(ReadWav, RejectsEmptyData) { EXPECT_THROW(read_wav(wav_image({})), FormatError); }

TEST(ReadWav, RejectsNonPcm) { EXPECT_THROW(read_wav(wav_image({1, 2}, 3)), FormatError); }

TEST(ReadWav, ForeignRateSuggestsResampling) {
  try {
    read_wav(wav_image({1, 2}, 1, 1, 44100));
    FAIL();
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("44100"), std::string::npos);
    EXPECT_NE(msg.find("resample"), std::string::npos);
  }
}

TEST(ReadWav, RejectsGarbageAndTruncation) {
  EXPECT_THROW(read_wav(std::vector<std::uint8_t>(10, 0)), FormatError);
  auto b = wav_image({1, 2, 3});
  b.resize(b.size() - 3);
  EXPECT_THROW(read_wav(b), FormatError);
}

TEST(WriteWav, RoundTripWithinQuantization) {
  const auto a = test::sine(440, 1600);
  const auto back = read_wav(encode_wav(a).bytes);
  ASSERT_EQ(back.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(back.samples[i], a.samples[i], 1.0 / 32768);
}

TEST(WriteWav, ClampsAndCounts) {
  AudioBuffer a;
  a.samples = {2.0f, -3.0f, 0.25f};
  const auto res = encode_wav(a);
  EXPECT_EQ(res.clamped, 2u);
  const auto back = read_wav(res.bytes);
  EXPECT_FLOAT_EQ(back.samples[0], 32767.0f / 32768.0f);
  EXPECT_EQ(back.samples[1], -1.0f);
  EXPECT_EQ(back.samples[2], 0.25f);
}

TEST(WriteWav, FileRoundTrip) {
  test::TempDir dir("wav");
  const auto a = test::noise(321, 4, 0.2);
  write_wav_file(dir.path() / "x.wav", a);
  EXPECT_EQ(read_wav_file(dir.path() / "x.wav").size(), 321u);
  EXPECT_THROW(read_wav_file(dir.path() / "missing.wav"), DataError);
}

TEST(Audio, RmsAndPower) {
  const std::vector<float> s{3, -4};
  EXPECT_DOUBLE_EQ(mean_power(s), 12.5);
  EXPECT_DOUBLE_EQ(rms(s), std::sqrt(12.5));
}
