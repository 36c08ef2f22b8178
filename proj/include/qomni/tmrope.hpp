// Copyright 2026 The Qomni Authors.
// SPDX-License-Identifier: Apache-2.0

// Time-aligned multimodal rotary positions.
//
// Every token gets a (temporal, height, width) coordinate. Text and audio
// tokens carry identical components; image and video tokens take their row
// and column from the patch grid. One temporal unit is 80 ms of wall time.
// Each segment starts at one plus the largest ID used so far.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "qomni/core.hpp"

namespace qomni::tmrope {

inline constexpr std::int64_t kMsPerTemporalId = 80;

struct PositionTriple {
  std::int64_t t = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  std::int64_t max_id() const { return std::max({t, h, w}); }
  bool operator==(const PositionTriple&) const = default;
};

inline PositionTriple uniform_triple(std::int64_t id) { return {id, id, id}; }

enum class Modality { Text, Audio, Image, VideoFrames, AudioVisual };

struct VideoFrame {
  std::int64_t timestamp_ms = 0;
  std::int64_t rows = 1;
  std::int64_t cols = 1;
};

struct ModalitySegment {
  Modality kind = Modality::Text;
  std::int64_t token_count = 0;
  std::int64_t duration_ms = 0;  // Audio
  std::int64_t rows = 0;         // Image
  std::int64_t cols = 0;         // Image
  std::vector<VideoFrame> frames;         // VideoFrames
  std::vector<ModalitySegment> children;  // AudioVisual: {audio, video}

  static ModalitySegment text(std::int64_t n) {
    ModalitySegment s;
    s.kind = Modality::Text;
    s.token_count = n;
    return s;
  }

  static ModalitySegment audio(std::int64_t duration_ms) {
    ModalitySegment s;
    s.kind = Modality::Audio;
    s.duration_ms = duration_ms;
    s.token_count = duration_ms > 0 ? (duration_ms + kMsPerTemporalId - 1) / kMsPerTemporalId : 0;
    return s;
  }

  static ModalitySegment image(std::int64_t rows, std::int64_t cols) {
    ModalitySegment s;
    s.kind = Modality::Image;
    s.rows = rows;
    s.cols = cols;
    s.token_count = rows * cols;
    return s;
  }

  static ModalitySegment video(std::vector<VideoFrame> frames) {
    ModalitySegment s;
    s.kind = Modality::VideoFrames;
    for (const auto& f : frames) s.token_count += f.rows * f.cols;
    s.frames = std::move(frames);
    return s;
  }

  static ModalitySegment audiovisual(ModalitySegment audio, ModalitySegment video) {
    ModalitySegment s;
    s.kind = Modality::AudioVisual;
    s.token_count = audio.token_count + video.token_count;
    s.children = {std::move(audio), std::move(video)};
    return s;
  }

  void validate() const {
    switch (kind) {
      case Modality::Text:
        require(token_count >= 1, "text segment needs at least one token");
        break;
      case Modality::Audio:
        require(duration_ms > 0, "audio duration must be positive");
        require(token_count == (duration_ms + kMsPerTemporalId - 1) / kMsPerTemporalId,
                "audio token_count must equal ceil(duration_ms / 80)");
        break;
      case Modality::Image:
        require(rows >= 1 && cols >= 1, "image grid must be at least 1x1");
        require(rows * cols == token_count, "image rows*cols must equal token_count");
        break;
      case Modality::VideoFrames: {
        require(!frames.empty(), "video segment needs at least one frame");
        std::int64_t total = 0;
        for (std::size_t i = 0; i < frames.size(); ++i) {
          require(frames[i].rows >= 1 && frames[i].cols >= 1, "video frame grid must be at least 1x1");
          require(frames[i].timestamp_ms >= 0, "video timestamps must be non-negative");
          if (i > 0)
            require(frames[i].timestamp_ms > frames[i - 1].timestamp_ms,
                    "video timestamps must be strictly increasing");
          total += frames[i].rows * frames[i].cols;
        }
        require(total == token_count, "video token_count must equal the sum of frame grids");
        break;
      }
      case Modality::AudioVisual:
        require(children.size() == 2, "audiovisual segment needs an audio and a video child");
        require(children[0].kind == Modality::Audio, "audiovisual first child must be audio");
        require(children[1].kind == Modality::VideoFrames, "audiovisual second child must be video");
        children[0].validate();
        // An empty video child is allowed and degenerates to plain audio.
        if (!children[1].frames.empty()) children[1].validate();
        require(token_count == children[0].token_count + children[1].token_count,
                "audiovisual token_count must equal the children's total");
        break;
    }
  }
};

/// One token of a merged audiovisual sequence.
struct AlignedToken {
  Modality source = Modality::Audio;  // Audio or VideoFrames
  std::int64_t source_index = 0;      // index within its child
  PositionTriple pos;
};

namespace detail {

inline void append_image_grid(std::vector<PositionTriple>& out, std::int64_t t, std::int64_t base,
                              std::int64_t rows, std::int64_t cols) {
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c) out.push_back({t, base + r, base + c});
}

}  // namespace detail

/// Merges audio and video tokens on a shared absolute time axis. Order is
/// (t, audio before video, h, w).
inline std::vector<AlignedToken> align_audiovisual(const ModalitySegment& audio,
                                                   const ModalitySegment& video, std::int64_t base) {
  require(base >= 0, "base must be non-negative");
  require(audio.kind == Modality::Audio, "align_audiovisual: first argument must be audio");
  require(video.kind == Modality::VideoFrames, "align_audiovisual: second argument must be video");
  audio.validate();
  if (!video.frames.empty()) video.validate();

  std::vector<AlignedToken> tokens;
  tokens.reserve(static_cast<std::size_t>(audio.token_count + video.token_count));
  for (std::int64_t i = 0; i < audio.token_count; ++i)
    tokens.push_back({Modality::Audio, i, uniform_triple(base + i)});

  std::int64_t idx = 0;
  std::int64_t prev_t = -1;
  for (const auto& f : video.frames) {
    std::int64_t t = base + f.timestamp_ms / kMsPerTemporalId;
    require(t != prev_t, "two video frames quantize to the same temporal ID");
    prev_t = t;
    for (std::int64_t r = 0; r < f.rows; ++r)
      for (std::int64_t c = 0; c < f.cols; ++c)
        tokens.push_back({Modality::VideoFrames, idx++, {t, base + r, base + c}});
  }

  std::stable_sort(tokens.begin(), tokens.end(), [](const AlignedToken& a, const AlignedToken& b) {
    int ta = a.source == Modality::Audio ? 0 : 1;
    int tb = b.source == Modality::Audio ? 0 : 1;
    return std::tie(a.pos.t, ta, a.pos.h, a.pos.w) < std::tie(b.pos.t, tb, b.pos.h, b.pos.w);
  });
  return tokens;
}

/// Assigns one position triple per token, segment by segment.
inline std::vector<PositionTriple> assign_positions(std::span<const ModalitySegment> segments,
                                                    std::int64_t start_id = 0) {
  require(!segments.empty(), "assign_positions: empty segment list");
  require(start_id >= 0, "assign_positions: start_id must be non-negative");

  std::vector<PositionTriple> out;
  std::int64_t base = start_id;
  for (const auto& seg : segments) {
    seg.validate();
    std::size_t first = out.size();
    switch (seg.kind) {
      case Modality::Text:
      case Modality::Audio:
        for (std::int64_t i = 0; i < seg.token_count; ++i) out.push_back(uniform_triple(base + i));
        break;
      case Modality::Image:
        detail::append_image_grid(out, base, base, seg.rows, seg.cols);
        break;
      case Modality::VideoFrames:
        for (const auto& f : seg.frames)
          detail::append_image_grid(out, base + f.timestamp_ms / kMsPerTemporalId, base, f.rows, f.cols);
        break;
      case Modality::AudioVisual:
        for (const auto& tok : align_audiovisual(seg.children[0], seg.children[1], base))
          out.push_back(tok.pos);
        break;
    }
    std::int64_t mx = base - 1;
    for (std::size_t i = first; i < out.size(); ++i) mx = std::max(mx, out[i].max_id());
    base = mx + 1;
  }
  return out;
}

inline std::vector<PositionTriple> assign_positions(std::initializer_list<ModalitySegment> segments,
                                                    std::int64_t start_id = 0) {
  return assign_positions(std::span<const ModalitySegment>(segments.begin(), segments.size()), start_id);
}

/// Next free ID after a run of triples (the base of a following segment).
inline std::int64_t next_base(std::span<const PositionTriple> triples, std::int64_t start_id = 0) {
  std::int64_t mx = start_id - 1;
  for (const auto& p : triples) mx = std::max(mx, p.max_id());
  return mx + 1;
}

enum class Axis : std::uint8_t { T, H, W, None };

struct AngleAllocation {
  int head_dim = 0;
  double base_theta = 10000.0;
  std::array<int, 3> split{0, 0, 0};
  std::vector<Axis> axis_of_pair;
  std::vector<double> frequency;  // per pair

  std::size_t pairs() const { return axis_of_pair.size(); }
};

/// Lays out rotary pairs as a repeating T,H,W cycle, skipping an axis once its
/// quota is spent. The default 24/20/20 split yields 20 full cycles followed
/// by four trailing T pairs at the lowest frequencies. Pairs beyond the split
/// total stay unrotated.
inline AngleAllocation build_angle_allocation(int head_dim, std::array<int, 3> split,
                                              double base_theta = 10000.0, bool strict = true) {
  require(head_dim > 0 && head_dim % 2 == 0, "head_dim must be positive and even");
  require(base_theta > 0.0, "base_theta must be positive");
  require(split[0] >= 0 && split[1] >= 0 && split[2] >= 0, "split components must be non-negative");
  int total = split[0] + split[1] + split[2];
  require(total <= head_dim / 2, "split sum exceeds head_dim/2");
  require(!(strict && total == 0), "split (0,0,0) is rejected in strict mode");

  AngleAllocation a;
  a.head_dim = head_dim;
  a.base_theta = base_theta;
  a.split = split;
  const int n_pairs = head_dim / 2;
  a.axis_of_pair.assign(static_cast<std::size_t>(n_pairs), Axis::None);
  a.frequency.resize(static_cast<std::size_t>(n_pairs));
  for (int i = 0; i < n_pairs; ++i)
    a.frequency[static_cast<std::size_t>(i)] =
        std::pow(base_theta, -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));

  std::array<int, 3> left = split;
  int pair = 0;
  while (pair < total) {
    for (int axis = 0; axis < 3 && pair < total; ++axis) {
      if (left[static_cast<std::size_t>(axis)] == 0) continue;
      --left[static_cast<std::size_t>(axis)];
      a.axis_of_pair[static_cast<std::size_t>(pair++)] = static_cast<Axis>(axis);
    }
  }
  return a;
}

/// The 24/20/20 split scaled to head_dim/2 pairs, H and W rounded down and
/// the remainder given to T.
inline std::array<int, 3> scaled_split(int head_dim) {
  int pairs = head_dim / 2;
  int hw = pairs * 20 / 64;
  return {pairs - 2 * hw, hw, hw};
}

inline std::int64_t axis_value(const PositionTriple& p, Axis axis) {
  switch (axis) {
    case Axis::T: return p.t;
    case Axis::H: return p.h;
    case Axis::W: return p.w;
    case Axis::None: break;
  }
  return 0;
}

/// Rotates channel pairs (2i, 2i+1) in place.
inline void apply_rotary_inplace(std::span<double> v, const PositionTriple& pos, const AngleAllocation& alloc) {
  require(v.size() == static_cast<std::size_t>(alloc.head_dim), "apply_rotary: vector length != head_dim");
  for (std::size_t i = 0; i < alloc.pairs(); ++i) {
    Axis axis = alloc.axis_of_pair[i];
    if (axis == Axis::None) continue;
    double angle = static_cast<double>(axis_value(pos, axis)) * alloc.frequency[i];
    double c = std::cos(angle);
    double s = std::sin(angle);
    double x0 = v[2 * i];
    double x1 = v[2 * i + 1];
    v[2 * i] = x0 * c - x1 * s;
    v[2 * i + 1] = x0 * s + x1 * c;
  }
}

inline Vec apply_rotary(std::span<const double> v, const PositionTriple& pos, const AngleAllocation& alloc) {
  Vec out(v.begin(), v.end());
  apply_rotary_inplace(out, pos, alloc);
  return out;
}

}  // namespace qomni::tmrope
