// Copyright 2026 The Qomni Authors.
// SPDX-License-Identifier: Apache-2.0

// Causal convolutional renderer: codec frames -> waveform, 80 ms per frame.
//
// A frame's codebook embeddings are summed, mixed with the previous
// receptive_frames - 1 frame embeddings by a causal temporal convolution, and
// expanded to samples by non-overlapping transposed-convolution stages
// (8 x 8 x 6 x 5 = 1920 samples at 24 kHz). Nothing looks right of the
// current frame, so each frame is rendered as soon as it arrives.

#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <istream>
#include <numeric>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "qomni/core.hpp"
#include "qomni/talker_stream.hpp"

namespace qomni::code2wav {

using talker::CodecFrame;

inline constexpr std::uint64_t kRendererSeed = 0xC2;

struct RendererConfig {
  int sample_rate_hz = 24000;
  std::vector<int> upsample_strides{8, 8, 6, 5};
  std::vector<int> stage_channels{16, 16, 8, 1};
  int embed_dim = 32;
  int receptive_frames = 16;
  int codebooks = 4;
  int vocab = 256;
  std::uint64_t seed = kRendererSeed;
  // Identity activations, zero biases and no output clamp.
  bool linear_only = false;

  int upsample_factor() const { return sample_rate_hz * 8 / 100; }

  void validate() const {
    require(sample_rate_hz > 0 && (sample_rate_hz * 8) % 100 == 0,
            "RendererConfig: sample_rate_hz * 0.08 must be an integer");
    require(!upsample_strides.empty() && upsample_strides.size() == stage_channels.size(),
            "RendererConfig: one channel count per upsampling stage");
    int product = std::accumulate(upsample_strides.begin(), upsample_strides.end(), 1, std::multiplies<>());
    require(product == upsample_factor(), "RendererConfig: strides must multiply to sample_rate_hz * 0.08");
    require(stage_channels.back() == 1, "RendererConfig: last stage must have one channel");
    for (int s : upsample_strides) require(s >= 1, "RendererConfig: strides must be positive");
    for (int c : stage_channels) require(c >= 1, "RendererConfig: channel counts must be positive");
    require(embed_dim >= 1, "RendererConfig: embed_dim must be positive");
    require(receptive_frames >= 1, "RendererConfig: receptive_frames must be >= 1");
    require(codebooks >= 1 && codebooks <= 16, "RendererConfig: codebooks must be in [1, 16]");
    require(vocab >= 1, "RendererConfig: vocab must be positive");
  }
};

struct UpsampleStage {
  int stride = 1;
  std::vector<Matrix> phase;  // stride matrices, out x in
  Vec bias;
};

struct RendererWeights {
  std::vector<Matrix> codebook_embed;  // Q x (V x C)
  std::vector<Matrix> temporal;        // receptive_frames taps, C x C; tap r reads frame i - r
  Vec temporal_bias;
  std::vector<UpsampleStage> stages;
};

class Renderer {
 public:
  explicit Renderer(RendererConfig config) : config_(std::move(config)) {
    config_.validate();
    WeightRng rng(config_.seed);
    const auto c = static_cast<std::size_t>(config_.embed_dim);
    const auto r = static_cast<std::size_t>(config_.receptive_frames);
    const double bias_scale = config_.linear_only ? 0.0 : 0.1;
    for (int q = 0; q < config_.codebooks; ++q)
      weights_.codebook_embed.push_back(rng.matrix(static_cast<std::size_t>(config_.vocab), c, 1.0));
    for (std::size_t t = 0; t < r; ++t)
      weights_.temporal.push_back(rng.matrix(c, c, 1.0 / std::sqrt(static_cast<double>(c * r))));
    weights_.temporal_bias = rng.vector(c, bias_scale);
    std::size_t in = c;
    for (std::size_t s = 0; s < config_.upsample_strides.size(); ++s) {
      UpsampleStage st;
      st.stride = config_.upsample_strides[s];
      const auto out = static_cast<std::size_t>(config_.stage_channels[s]);
      for (int k = 0; k < st.stride; ++k) st.phase.push_back(rng.dense(out, in));
      st.bias = rng.vector(out, bias_scale);
      weights_.stages.push_back(std::move(st));
      in = out;
    }
  }

  const RendererConfig& config() const { return config_; }
  const RendererWeights& weights() const { return weights_; }
  RendererWeights& mutable_weights() { return weights_; }

  Vec embed(const CodecFrame& frame) const {
    frame.validate(config_.codebooks, config_.vocab);
    Vec e(static_cast<std::size_t>(config_.embed_dim), 0.0);
    for (int q = 0; q < config_.codebooks; ++q)
      add_inplace(e, weights_.codebook_embed[static_cast<std::size_t>(q)].row(static_cast<std::size_t>(frame.token(q))));
    return e;
  }

  /// Causal temporal mix. `history[r]` is the embedding of frame i - r, or
  /// nullptr where that frame does not exist (treated as zero).
  Vec temporal_mix(std::span<const Vec* const> history) const {
    Vec h = weights_.temporal_bias;
    Vec tmp(h.size());
    for (std::size_t r = 0; r < weights_.temporal.size(); ++r) {
      if (r >= history.size() || history[r] == nullptr) continue;
      matvec(weights_.temporal[r], *history[r], tmp);
      add_inplace(h, tmp);
    }
    activate(h);
    return h;
  }

  /// Expands one frame's hidden vector to upsample_factor samples.
  std::vector<double> upsample(const Vec& hidden) const {
    std::vector<double> x = hidden;  // time-major: steps x channels
    std::size_t in_ch = hidden.size();
    std::size_t steps = 1;
    for (const auto& st : weights_.stages) {
      const std::size_t out_ch = st.bias.size();
      std::vector<double> y(steps * static_cast<std::size_t>(st.stride) * out_ch);
      for (std::size_t t = 0; t < steps; ++t) {
        std::span<const double> xt(x.data() + t * in_ch, in_ch);
        for (int k = 0; k < st.stride; ++k) {
          std::span<double> yt(y.data() + (t * static_cast<std::size_t>(st.stride) + static_cast<std::size_t>(k)) * out_ch,
                               out_ch);
          matvec(st.phase[static_cast<std::size_t>(k)], xt, yt);
          add_inplace(yt, st.bias);
        }
      }
      steps *= static_cast<std::size_t>(st.stride);
      in_ch = out_ch;
      x = std::move(y);
      if (&st != &weights_.stages.back()) activate(x);
    }
    if (!config_.linear_only)
      for (double& v : x) v = std::tanh(v);
    return x;
  }

 private:
  void activate(std::span<double> v) const {
    if (config_.linear_only) return;
    for (double& x : v) x = std::tanh(x);
  }

  RendererConfig config_;
  RendererWeights weights_;
};

/// Left-context state of one stream: the last receptive_frames embeddings,
/// newest first.
struct RenderState {
  std::deque<Vec> history;
  std::int64_t frames_rendered = 0;
};

/// Renders the next frame. Frames must arrive in order; a rejected frame
/// leaves the state untouched.
inline std::vector<double> decode_frame(const Renderer& renderer, const CodecFrame& frame, RenderState& state) {
  require(frame.index == state.frames_rendered,
          "decode_frame: expected frame " + std::to_string(state.frames_rendered) + ", got " +
              std::to_string(frame.index));
  Vec e = renderer.embed(frame);
  state.history.push_front(std::move(e));
  const auto cap = static_cast<std::size_t>(renderer.config().receptive_frames);
  if (state.history.size() > cap) state.history.pop_back();
  std::vector<const Vec*> taps;
  for (const auto& v : state.history) taps.push_back(&v);
  ++state.frames_rendered;
  return renderer.upsample(renderer.temporal_mix(taps));
}

/// Whole-sequence rendering over a zero-padded embedding sequence.
inline std::vector<double> decode_offline(const Renderer& renderer, std::span<const CodecFrame> frames) {
  const auto r = static_cast<std::size_t>(renderer.config().receptive_frames);
  const Vec zero(static_cast<std::size_t>(renderer.config().embed_dim), 0.0);
  std::vector<Vec> padded(r - 1, zero);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    require(frames[i].index == static_cast<std::int64_t>(i), "decode_offline: frames must be indexed 0..n-1");
    padded.push_back(renderer.embed(frames[i]));
  }
  std::vector<double> out;
  out.reserve(frames.size() * static_cast<std::size_t>(renderer.config().upsample_factor()));
  std::vector<const Vec*> taps(r);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    for (std::size_t k = 0; k < r; ++k) taps[k] = &padded[i + r - 1 - k];
    auto s = renderer.upsample(renderer.temporal_mix(taps));
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

/// Parses the `frame,cb0,r1,...` dump written by talker::write_frames_csv.
inline std::vector<CodecFrame> read_frames_csv(std::istream& in) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "frames CSV: missing header");
  std::size_t cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  require(cols >= 2 && line.rfind("frame,cb0", 0) == 0, "frames CSV: header must start with frame,cb0");
  std::vector<CodecFrame> frames;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<long long> vals;
    for (std::string cell; std::getline(ss, cell, ',');) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stoll(cell, &used));
        require(used == cell.size(), "");
      } catch (const std::exception&) {
        throw Error("frames CSV line " + std::to_string(line_no) + ": bad value '" + cell + "'");
      }
    }
    require(vals.size() == cols, "frames CSV line " + std::to_string(line_no) + ": wrong column count");
    CodecFrame f{vals[0], static_cast<int>(vals[1]), {}};
    for (std::size_t c = 2; c < cols; ++c) f.residuals.push_back(static_cast<int>(vals[c]));
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace qomni::code2wav
