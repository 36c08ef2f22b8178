// Copyright 2026 The Qomni Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "qomni/audio_frontend.hpp"

namespace qomni::audio {
namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<std::vector<double>> split(const std::vector<double>& wave, std::size_t chunk) {
  std::vector<std::vector<double>> out;
  for (std::size_t s = 0; s < wave.size(); s += chunk)
    out.emplace_back(wave.begin() + std::ptrdiff_t(s), wave.begin() + std::ptrdiff_t(std::min(wave.size(), s + chunk)));
  return out;
}

void expect_blocks_near(const EncoderTokenBlock& a, const EncoderTokenBlock& b, double tol) {
  ASSERT_EQ(a.tokens, b.tokens);
  ASSERT_EQ(a.dim, b.dim);
  for (std::size_t i = 0; i < a.data.size(); ++i) ASSERT_NEAR(a.data[i], b.data[i], tol) << "at " << i;
}

TEST(FrameCounts, Formulae) {
  EXPECT_EQ(raw_frame_count(32000), 198u);
  EXPECT_EQ(padded_frame_count(32000), 200u);
  EXPECT_EQ(token_count_for_samples(32000), 25u);
  EXPECT_EQ(raw_frame_count(400), 1u);
  EXPECT_EQ(raw_frame_count(100), 1u);
  EXPECT_EQ(raw_frame_count(559), 1u);
  EXPECT_EQ(raw_frame_count(560), 2u);
}

TEST(Spectrum, MatchesNaiveDft) {
  const auto& mel = detail::mel_analyzer();
  auto x = noise(kWindowSamples, 3);
  auto got = mel.power_spectrum(x);
  ASSERT_EQ(got.size(), kFftSize / 2 + 1);
  for (std::size_t k = 0; k < got.size(); ++k) {
    std::complex<double> s = 0;
    for (std::size_t n = 0; n < kWindowSamples; ++n) {
      double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(n) / double(kWindowSamples - 1));
      s += x[n] * hann * std::polar(1.0, -2.0 * std::numbers::pi * double(k * n) / double(kFftSize));
    }
    EXPECT_NEAR(got[k], std::norm(s), 1e-9 * (1.0 + std::norm(s)));
  }
}

TEST(Spectrum, SafeAcrossThreads) {
  auto wave = noise(16000, 4);
  auto want = mel_spectrogram(wave).data;
  std::vector<std::thread> pool;
  std::vector<int> ok(4, 0);
  for (int t = 0; t < 4; ++t)
    pool.emplace_back([&, t] { ok[std::size_t(t)] = mel_spectrogram(wave).data == want; });
  for (auto& th : pool) th.join();
  for (int v : ok) EXPECT_TRUE(v);
}

TEST(MelSpectrogram, TwoSecondsGives200Frames) {
  auto mel = mel_spectrogram(noise(32000, 1));
  EXPECT_EQ(mel.frames, 200u);
  EXPECT_EQ(mel.valid_frames, 198u);
  EXPECT_EQ(mel.data.size(), 200u * kMelBins);
  EXPECT_TRUE(all_finite(mel.data));
}

TEST(MelSpectrogram, SilenceIsLogFloor) {
  auto mel = mel_spectrogram(std::vector<double>(16000, 0.0));
  for (double v : mel.data) EXPECT_EQ(v, log_floor());
}

TEST(MelSpectrogram, SingleWindow) {
  auto mel = mel_spectrogram(noise(400, 2));
  EXPECT_EQ(mel.valid_frames, 1u);
  EXPECT_EQ(mel.frames, 8u);
}

TEST(MelSpectrogram, ToneLandsInMatchingFilter) {
  // A 2 kHz tone peaks in the filter whose centre is closest to 2 kHz on the mel scale.
  std::vector<double> tone(4000);
  for (std::size_t i = 0; i < tone.size(); ++i) tone[i] = 0.5 * std::sin(2.0 * std::numbers::pi * 2000.0 * double(i) / 16000.0);
  auto mel = mel_spectrogram(tone);
  auto row = mel.row(5);
  std::size_t best = argmax(row);
  double delta = detail::hz_to_mel(8000.0) / double(kMelBins + 1);
  double centre = delta * double(best + 1);
  EXPECT_NEAR(centre, detail::hz_to_mel(2000.0), 2.0 * delta);
}

TEST(MelSpectrogram, Rejects) {
  EXPECT_THROW(mel_spectrogram(std::vector<double>{}), Error);
  EXPECT_THROW(mel_spectrogram(std::vector<double>{0.0, NAN}), Error);
}

TEST(Downsample, TokenCounts) {
  MelFrameBlock m;
  m.frames = m.valid_frames = 8;
  m.data.assign(8 * kMelBins, 1.0);
  EXPECT_EQ(downsample_tokens(m).tokens, 1u);
  m.frames = m.valid_frames = 200;
  m.data.assign(200 * kMelBins, 1.0);
  EXPECT_EQ(downsample_tokens(m).tokens, 25u);
}

TEST(Downsample, PartialGroupIsZeroPadded) {
  MelFrameBlock m;
  m.frames = m.valid_frames = 9;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  m.data.resize(9 * kMelBins);
  for (auto& v : m.data) v = nd(rng);
  auto block = downsample_tokens(m);
  ASSERT_EQ(block.tokens, 2u);
  std::vector<double> group(8 * kMelBins, 0.0);
  std::copy(m.data.begin() + 8 * kMelBins, m.data.end(), group.begin());
  auto want = default_encoder().downsample_group(group);
  for (std::size_t c = 0; c < want.size(); ++c) EXPECT_EQ(block.row(1)[c], want[c]);
}

TEST(WindowMask, Shapes) {
  auto full = window_mask(4, 8.0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(full.allowed(i, j), j <= i);
  auto band = window_mask_tokens(4, 2);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(band.allowed(i, j), j <= i && i - j < 2);
  auto one_s = window_mask(100, 1.0);
  EXPECT_EQ(one_s.window_tokens, 13u);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(one_s.row_count(i), std::min<std::size_t>(i + 1, 13));
}

TEST(WindowMask, RangeChecks) {
  EXPECT_THROW(window_tokens_for(0.5), Error);
  EXPECT_THROW(window_tokens_for(9.0), Error);
  EXPECT_THROW(window_tokens_for(-1.0, true), Error);
  EXPECT_EQ(window_tokens_for(0.04, true), 1u);
  EXPECT_EQ(window_tokens_for(8.0), 100u);
  EXPECT_EQ(window_tokens_for(2.0), 25u);
}

TEST(Streaming, SingleChunkEqualsOffline) {
  auto wave = noise(32000, 7);
  auto off = default_encoder().encode_offline(wave, 2.0);
  std::vector<std::vector<double>> one{wave};
  expect_blocks_near(encode_streaming(default_encoder(), one, 2.0), off, 1e-12);
}

TEST(Streaming, TokenSizedChunksEqualOffline) {
  auto wave = noise(32000, 8);
  auto off = default_encoder().encode_offline(wave, 1.0);
  EXPECT_EQ(off.tokens, 25u);
  auto chunks = split(wave, kSamplesPerToken);
  EXPECT_EQ(chunks.size(), 25u);
  expect_blocks_near(encode_streaming(default_encoder(), chunks, 1.0), off, 1e-6);
}

TEST(Streaming, RandomChunkingsEqualOffline) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    std::size_t n = kChunkGranularity * (1 + rng() % 80);
    auto wave = noise(n, 100 + std::uint64_t(trial));
    double window = 1.0 + double(rng() % 8);
    auto off = default_encoder().encode_offline(wave, window);
    std::vector<std::vector<double>> chunks;
    std::size_t s = 0;
    while (s < n) {
      std::size_t len = std::min(n - s, kChunkGranularity * (1 + rng() % 6));
      chunks.emplace_back(wave.begin() + std::ptrdiff_t(s), wave.begin() + std::ptrdiff_t(s + len));
      s += len;
    }
    expect_blocks_near(encode_streaming(default_encoder(), chunks, window), off, 1e-6);
  }
}

TEST(Streaming, CacheBoundedByWindow) {
  StreamingEncoder enc(default_encoder(), 1.0);
  auto wave = noise(16000 * 5, 12);
  for (const auto& c : split(wave, 640)) {
    enc.push(c);
    EXPECT_LE(enc.cache_size(), enc.window_tokens());
  }
  enc.finish();
  EXPECT_LE(enc.cache_size(), 13u);
  EXPECT_EQ(enc.tokens_emitted(), token_count_for_samples(wave.size()));
}

TEST(Streaming, TokensEmittedAsSoonAsCovered) {
  StreamingEncoder enc(default_encoder(), 2.0);
  auto wave = noise(1280 * 4, 13);
  // Token 0 reads samples [0, 1520).
  EXPECT_TRUE(enc.push(std::span(wave).subspan(0, 1280)).empty());
  EXPECT_EQ(enc.push(std::span(wave).subspan(1280, 640)).size(), 1u);
}

TEST(Streaming, Rejects) {
  StreamingEncoder enc(default_encoder(), 2.0);
  EXPECT_THROW(enc.push(std::vector<double>(100, 0.0)), Error);
  EXPECT_THROW(enc.finish(), Error);
  StreamingEncoder enc2(default_encoder(), 2.0);
  enc2.push(std::vector<double>(640, 0.0));
  enc2.finish();
  EXPECT_THROW(enc2.push(std::vector<double>(640, 0.0)), Error);
  EXPECT_THROW(StreamingEncoder(default_encoder(), 10.0), Error);
}

TEST(Attention, OutsideWindowHasNoInfluence) {
  // Perturbing audio more than a window before token i leaves token i unchanged.
  auto wave = noise(1280 * 40, 14);
  auto base = default_encoder().encode_offline(wave, 1.0);
  auto moved = wave;
  for (std::size_t i = 0; i < 1280 * 2; ++i) moved[i] += 0.3;
  auto out = default_encoder().encode_offline(moved, 1.0);
  // Tokens 0..2 see the change directly; from token 2 + 13 on, nothing may differ.
  for (std::size_t t = 15; t < base.tokens; ++t)
    for (std::size_t c = 0; c < base.dim; ++c) ASSERT_EQ(base.row(t)[c], out.row(t)[c]) << t;
  bool changed = false;
  for (std::size_t c = 0; c < base.dim; ++c) changed |= base.row(1)[c] != out.row(1)[c];
  EXPECT_TRUE(changed);
}

}  // namespace
}  // namespace qomni::audio
