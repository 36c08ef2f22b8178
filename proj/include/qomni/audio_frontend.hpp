// Copyright 2026 The Qomni Authors.
// SPDX-License-Identifier: Apache-2.0

// Audio frontend: 16 kHz waveform -> 128-bin log-mel frames (25 ms window,
// 10 ms hop) -> 8x temporal downsampling to 12.5 Hz encoder tokens -> one
// left-context windowed self-attention layer. The streaming encoder keeps
// only the last `window_tokens` key/value states and reproduces the offline
// path exactly.

#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <fftw3.h>

#include "qomni/core.hpp"

namespace qomni::audio {

inline constexpr int kSampleRateHz = 16000;
inline constexpr std::size_t kWindowSamples = 400;
inline constexpr std::size_t kHopSamples = 160;
inline constexpr std::size_t kMelBins = 128;
inline constexpr std::size_t kFftSize = 512;
inline constexpr std::size_t kFramesPerToken = 8;
inline constexpr std::size_t kSamplesPerToken = kFramesPerToken * kHopSamples;  // 1280, 80 ms
inline constexpr std::size_t kChunkGranularity = 640;
inline constexpr double kTokenRateHz = 12.5;
inline constexpr double kTokenSpanMs = 80.0;
inline constexpr double kMelEnergyFloor = 1e-10;
inline constexpr std::uint64_t kEncoderSeed = 0xA07;

inline double log_floor() { return std::log(kMelEnergyFloor); }

/// Frames from left-aligned 400-sample windows; inputs shorter than one
/// window count as one (zero-padded) frame.
inline std::size_t raw_frame_count(std::size_t num_samples) {
  return num_samples < kWindowSamples ? 1 : 1 + (num_samples - kWindowSamples) / kHopSamples;
}

inline std::size_t padded_frame_count(std::size_t num_samples) {
  std::size_t f = raw_frame_count(num_samples);
  return (f + kFramesPerToken - 1) / kFramesPerToken * kFramesPerToken;
}

inline std::size_t token_count_for_samples(std::size_t num_samples) {
  return padded_frame_count(num_samples) / kFramesPerToken;
}

struct MelFrameBlock {
  std::size_t frames = 0;        // rows, including padding frames
  std::size_t valid_frames = 0;  // frames fully covered by real samples
  std::vector<double> data;      // frames x kMelBins

  std::span<const double> row(std::size_t i) const { return {data.data() + i * kMelBins, kMelBins}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * kMelBins, kMelBins}; }
};

struct EncoderTokenBlock {
  std::size_t tokens = 0;
  std::size_t dim = 0;
  std::vector<double> data;  // tokens x dim

  std::span<const double> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
  double span_ms() const { return static_cast<double>(tokens) * kTokenSpanMs; }
};

namespace detail {

/// Real-input FFT of one fixed size. The plan is made once; execution uses
/// the new-array interface, which FFTW allows from several threads at once.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n) {
    std::vector<double> in(n);
    std::vector<std::complex<double>> out(n / 2 + 1);
    {
      std::lock_guard lock(planner_mutex());
      plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
    require(plan_ != nullptr, "FFTW could not plan a size-" + std::to_string(n) + " transform");
  }
  ~Fft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  Fft(const Fft&) = delete;
  Fft& operator=(const Fft&) = delete;

  std::size_t size() const { return n_; }

  /// |X_k|^2 for k = 0..n/2; `in` holds n samples.
  void power(std::span<double> in, std::span<double> out) const {
    std::vector<std::complex<double>> spec(n_ / 2 + 1);
    fftw_execute_dft_r2c(plan_, in.data(), reinterpret_cast<fftw_complex*>(spec.data()));
    for (std::size_t k = 0; k < spec.size(); ++k) out[k] = std::norm(spec[k]);
  }

 private:
  // Planning and plan destruction are not thread-safe in FFTW.
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  std::size_t n_;
  fftw_plan plan_ = nullptr;
};

inline double hz_to_mel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }

/// Hann window, power spectrum, HTK-scale triangular filters over 0-8 kHz,
/// natural log with an energy floor.
class MelAnalyzer {
 public:
  MelAnalyzer() : fft_(kFftSize), window_(kWindowSamples), weights_(kMelBins, kFftSize / 2 + 1) {
    for (std::size_t i = 0; i < kWindowSamples; ++i)
      window_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                         static_cast<double>(kWindowSamples - 1));
    const double mel_lo = hz_to_mel(0.0);
    const double mel_hi = hz_to_mel(kSampleRateHz / 2.0);
    const double delta = (mel_hi - mel_lo) / static_cast<double>(kMelBins + 1);
    for (std::size_t m = 0; m < kMelBins; ++m) {
      double left = mel_lo + delta * static_cast<double>(m);
      double center = left + delta;
      double right = center + delta;
      for (std::size_t k = 0; k <= kFftSize / 2; ++k) {
        double mel = hz_to_mel(static_cast<double>(k) * kSampleRateHz / static_cast<double>(kFftSize));
        double w = 0.0;
        if (mel > left && mel <= center)
          w = (mel - left) / (center - left);
        else if (mel > center && mel < right)
          w = (right - mel) / (right - center);
        weights_(m, k) = w;
      }
    }
  }

  /// Power spectrum of one Hann-windowed 400-sample frame (257 bins).
  Vec power_spectrum(std::span<const double> samples) const {
    std::vector<double> buf(kFftSize, 0.0);
    for (std::size_t i = 0; i < kWindowSamples; ++i) buf[i] = samples[i] * window_[i];
    Vec power(kFftSize / 2 + 1);
    fft_.power(buf, power);
    return power;
  }

  void frame(std::span<const double> samples, std::span<double> out) const {
    matvec(weights_, power_spectrum(samples), out);
    for (double& v : out) v = std::log(std::max(v, kMelEnergyFloor));
  }

  const Matrix& filterbank() const { return weights_; }

 private:
  Fft fft_;
  Vec window_;
  Matrix weights_;
};

inline const MelAnalyzer& mel_analyzer() {
  static const MelAnalyzer analyzer;
  return analyzer;
}

}  // namespace detail

/// Log-mel frames. The waveform is zero-padded on the right so the frame
/// count is a multiple of 8.
inline MelFrameBlock mel_spectrogram(std::span<const double> waveform) {
  require(!waveform.empty(), "mel_spectrogram: empty waveform");
  require(all_finite(waveform), "mel_spectrogram: non-finite sample");
  MelFrameBlock block;
  block.valid_frames = raw_frame_count(waveform.size());
  block.frames = padded_frame_count(waveform.size());
  std::vector<double> padded(kWindowSamples + (block.frames - 1) * kHopSamples, 0.0);
  std::copy(waveform.begin(), waveform.end(), padded.begin());
  block.data.resize(block.frames * kMelBins);
  const auto& analyzer = detail::mel_analyzer();
  for (std::size_t f = 0; f < block.frames; ++f)
    analyzer.frame(std::span<const double>(padded).subspan(f * kHopSamples, kWindowSamples), block.row(f));
  return block;
}

struct WindowMask {
  std::size_t n = 0;
  std::size_t window_tokens = 0;
  std::vector<std::uint8_t> bits;  // n x n, row = query

  bool allowed(std::size_t i, std::size_t j) const { return bits[i * n + j] != 0; }

  std::size_t row_count(std::size_t i) const {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) c += bits[i * n + j];
    return c;
  }
};

/// Nearest whole token count for a window in seconds, at least one.
inline std::size_t window_tokens_for(double window_s, bool unsafe_window = false) {
  require(std::isfinite(window_s) && window_s > 0.0, "window must be a positive finite number of seconds");
  require(unsafe_window || (window_s >= 1.0 && window_s <= 8.0),
          "attention window must be within [1, 8] s (pass --unsafe-window to override)");
  long tokens = std::lround(window_s * kTokenRateHz);
  return static_cast<std::size_t>(std::max(1L, tokens));
}

inline WindowMask window_mask_tokens(std::size_t n_tokens, std::size_t window_tokens) {
  require(n_tokens >= 1, "window_mask: n_tokens must be >= 1");
  require(window_tokens >= 1, "window_mask: window_tokens must be >= 1");
  WindowMask m;
  m.n = n_tokens;
  m.window_tokens = window_tokens;
  m.bits.assign(n_tokens * n_tokens, 0);
  for (std::size_t i = 0; i < n_tokens; ++i)
    for (std::size_t j = 0; j <= i; ++j)
      if (i - j < window_tokens) m.bits[i * n_tokens + j] = 1;
  return m;
}

inline WindowMask window_mask(std::size_t n_tokens, double window_s, bool unsafe_window = false) {
  return window_mask_tokens(n_tokens, window_tokens_for(window_s, unsafe_window));
}

/// Toy encoder weights: a 4x frame-group projection, a 2x projection, then a
/// single-head windowed self-attention layer with a residual connection.
/// Projections are bias-free.
class AudioEncoder {
 public:
  static constexpr std::size_t kStage1Group = 4;
  static constexpr std::size_t kStage2Group = 2;
  static constexpr std::size_t kStage1Channels = 64;
  static constexpr std::size_t kDim = 32;
  static constexpr double kInputScale = 0.1;

  explicit AudioEncoder(std::uint64_t seed = kEncoderSeed) {
    WeightRng rng(seed);
    stage1_ = rng.dense(kStage1Channels, kStage1Group * kMelBins);
    stage2_ = rng.dense(kDim, kStage2Group * kStage1Channels);
    wq_ = rng.dense(kDim, kDim);
    wk_ = rng.dense(kDim, kDim);
    wv_ = rng.dense(kDim, kDim);
    wo_ = rng.dense(kDim, kDim);
  }

  std::size_t dim() const { return kDim; }

  /// One token from exactly eight consecutive mel rows (8 x 128, row-major).
  Vec downsample_group(std::span<const double> frames) const {
    require(frames.size() == kFramesPerToken * kMelBins, "downsample_group: expects 8 mel frames");
    Vec stage2_in(kStage2Group * kStage1Channels);
    Vec group(kStage1Group * kMelBins);
    for (std::size_t g = 0; g < kStage2Group; ++g) {
      for (std::size_t i = 0; i < group.size(); ++i)
        group[i] = frames[g * group.size() + i] * kInputScale;
      std::span<double> h(stage2_in.data() + g * kStage1Channels, kStage1Channels);
      matvec(stage1_, group, h);
      for (double& v : h) v = std::tanh(v);
    }
    Vec out = matvec(stage2_, stage2_in);
    for (double& v : out) v = std::tanh(v);
    return out;
  }

  /// ceil(F/8) tokens; a trailing partial group is padded with zero rows.
  EncoderTokenBlock downsample(const MelFrameBlock& mel) const {
    require(mel.frames >= 1, "downsample: need at least one mel frame");
    EncoderTokenBlock out;
    out.tokens = (mel.frames + kFramesPerToken - 1) / kFramesPerToken;
    out.dim = kDim;
    out.data.reserve(out.tokens * kDim);
    std::vector<double> group(kFramesPerToken * kMelBins);
    for (std::size_t t = 0; t < out.tokens; ++t) {
      std::fill(group.begin(), group.end(), 0.0);
      for (std::size_t f = 0; f < kFramesPerToken; ++f) {
        std::size_t src = t * kFramesPerToken + f;
        if (src >= mel.frames) break;
        auto row = mel.row(src);
        std::copy(row.begin(), row.end(), group.begin() + static_cast<std::ptrdiff_t>(f * kMelBins));
      }
      Vec tok = downsample_group(group);
      out.data.insert(out.data.end(), tok.begin(), tok.end());
    }
    return out;
  }

  struct KeyValue {
    Vec key;
    Vec value;
  };

  Vec query(std::span<const double> x) const { return matvec(wq_, x); }
  KeyValue key_value(std::span<const double> x) const { return {matvec(wk_, x), matvec(wv_, x)}; }

  /// Residual attention output for one query over the given keys, in order.
  template <typename KvRange>
  Vec attend(std::span<const double> x, const KvRange& kvs) const {
    Vec q = query(x);
    const double scale = 1.0 / std::sqrt(static_cast<double>(kDim));
    Vec scores;
    for (const KeyValue& kv : kvs) scores.push_back(dot(q, kv.key) * scale);
    softmax_inplace(scores);
    Vec ctx(kDim, 0.0);
    std::size_t j = 0;
    for (const KeyValue& kv : kvs) {
      for (std::size_t c = 0; c < kDim; ++c) ctx[c] += scores[j] * kv.value[c];
      ++j;
    }
    Vec out(x.begin(), x.end());
    add_inplace(out, matvec(wo_, ctx));
    return out;
  }

  /// Applies the attention layer to a whole token block under a mask.
  EncoderTokenBlock attend_block(const EncoderTokenBlock& in, const WindowMask& mask) const {
    require(mask.n == in.tokens, "attend_block: mask size != token count");
    std::vector<KeyValue> kv;
    kv.reserve(in.tokens);
    for (std::size_t i = 0; i < in.tokens; ++i) kv.push_back(key_value(in.row(i)));
    EncoderTokenBlock out;
    out.tokens = in.tokens;
    out.dim = in.dim;
    out.data.reserve(in.data.size());
    std::vector<KeyValue> visible;
    for (std::size_t i = 0; i < in.tokens; ++i) {
      visible.clear();
      for (std::size_t j = 0; j < in.tokens; ++j)
        if (mask.allowed(i, j)) visible.push_back(kv[j]);
      Vec o = attend(in.row(i), visible);
      out.data.insert(out.data.end(), o.begin(), o.end());
    }
    return out;
  }

  EncoderTokenBlock encode_offline(std::span<const double> waveform, double window_s,
                                   bool unsafe_window = false) const {
    std::size_t w = window_tokens_for(window_s, unsafe_window);
    EncoderTokenBlock tokens = downsample(mel_spectrogram(waveform));
    return attend_block(tokens, window_mask_tokens(tokens.tokens, w));
  }

 private:
  Matrix stage1_, stage2_, wq_, wk_, wv_, wo_;
};

inline const AudioEncoder& default_encoder() {
  static const AudioEncoder encoder;
  return encoder;
}

inline EncoderTokenBlock downsample_tokens(const MelFrameBlock& mel) { return default_encoder().downsample(mel); }

/// Incremental encoder. Accepts chunks whose length is a multiple of 640
/// samples, emits each token once all of its eight mel windows are covered
/// by real samples, and flushes the zero-padded tail on finish().
class StreamingEncoder {
 public:
  StreamingEncoder(const AudioEncoder& encoder, double window_s, bool unsafe_window = false)
      : encoder_(&encoder), window_tokens_(window_tokens_for(window_s, unsafe_window)) {}

  std::vector<Vec> push(std::span<const double> chunk) {
    require(!finished_, "StreamingEncoder: push after finish");
    require(!chunk.empty() && chunk.size() % kChunkGranularity == 0,
            "StreamingEncoder: chunk length must be a positive multiple of 640 samples");
    require(all_finite(chunk), "StreamingEncoder: non-finite sample");
    buffer_.insert(buffer_.end(), chunk.begin(), chunk.end());
    total_ += chunk.size();
    std::vector<Vec> out;
    while (total_ >= token_end_sample(emitted_)) out.push_back(emit_next());
    return out;
  }

  std::vector<Vec> finish() {
    require(!finished_, "StreamingEncoder: finish called twice");
    require(total_ > 0, "StreamingEncoder: no audio received");
    finished_ = true;
    const std::size_t n_tokens = token_count_for_samples(total_);
    buffer_.resize(token_end_sample(n_tokens - 1) - buffer_start_, 0.0);
    std::vector<Vec> out;
    while (emitted_ < n_tokens) out.push_back(emit_next());
    return out;
  }

  std::size_t cache_size() const { return cache_.size(); }
  std::size_t window_tokens() const { return window_tokens_; }
  std::size_t tokens_emitted() const { return emitted_; }

 private:
  // One past the last sample read by token i's final mel window.
  static std::size_t token_end_sample(std::size_t i) {
    return i * kSamplesPerToken + (kFramesPerToken - 1) * kHopSamples + kWindowSamples;
  }

  Vec emit_next() {
    const std::size_t start = emitted_ * kSamplesPerToken - buffer_start_;
    std::vector<double> frames(kFramesPerToken * kMelBins);
    const auto& analyzer = detail::mel_analyzer();
    for (std::size_t f = 0; f < kFramesPerToken; ++f)
      analyzer.frame(std::span<const double>(buffer_).subspan(start + f * kHopSamples, kWindowSamples),
                     std::span<double>(frames).subspan(f * kMelBins, kMelBins));
    Vec x = encoder_->downsample_group(frames);

    cache_.push_back(encoder_->key_value(x));
    if (cache_.size() > window_tokens_) cache_.pop_front();
    Vec out = encoder_->attend(x, cache_);

    ++emitted_;
    const std::size_t drop = emitted_ * kSamplesPerToken - buffer_start_;
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(std::min(drop, buffer_.size())));
    buffer_start_ += drop;
    return out;
  }

  const AudioEncoder* encoder_;
  std::size_t window_tokens_;
  std::vector<double> buffer_;
  std::size_t buffer_start_ = 0;  // absolute index of buffer_[0]
  std::size_t total_ = 0;
  std::size_t emitted_ = 0;
  bool finished_ = false;
  std::deque<AudioEncoder::KeyValue> cache_;
};

inline EncoderTokenBlock encode_streaming(const AudioEncoder& encoder,
                                          std::span<const std::vector<double>> chunks, double window_s,
                                          bool unsafe_window = false) {
  StreamingEncoder stream(encoder, window_s, unsafe_window);
  EncoderTokenBlock out;
  out.dim = encoder.dim();
  auto take = [&](std::vector<Vec> toks) {
    for (auto& t : toks) out.data.insert(out.data.end(), t.begin(), t.end());
    out.tokens += toks.size();
  };
  for (const auto& c : chunks) take(stream.push(c));
  take(stream.finish());
  return out;
}

}  // namespace qomni::audio
