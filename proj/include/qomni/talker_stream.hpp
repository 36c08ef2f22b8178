// Copyright 2026 The Qomni Authors.
// SPDX-License-Identifier: Apache-2.0

// Multi-codebook speech-token generation, one 80 ms codec frame per step.
//
// Per frame the MoE backbone consumes the summed codebook embeddings of the
// previous frame (plus the aligned context feature, if any) and a linear head
// picks codebook 0. A small fixed-step dense transformer (the MTP module)
// then predicts codebooks 1..Q-1 autoregressively inside the frame, using a
// key/value buffer that never holds more than Q entries.
//
// The talker conditions only on the context features it is given, never on
// text hidden states.

#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "qomni/core.hpp"
#include "qomni/latency_clock.hpp"
#include "qomni/moe_core.hpp"

namespace qomni::talker {

inline constexpr double kFrameSpanMs = 80.0;

struct CodecFrame {
  std::int64_t index = 0;
  int cb0 = 0;
  std::vector<int> residuals;  // codebooks 1..Q-1

  int codebooks() const { return 1 + static_cast<int>(residuals.size()); }
  int token(int q) const { return q == 0 ? cb0 : residuals[static_cast<std::size_t>(q - 1)]; }
  bool operator==(const CodecFrame&) const = default;

  void validate(int q, int vocab) const {
    require(index >= 0, "CodecFrame: negative index");
    require(codebooks() == q, "CodecFrame: wrong number of codebooks");
    for (int i = 0; i < q; ++i) require(token(i) >= 0 && token(i) < vocab, "CodecFrame: token id out of range");
  }
};

struct TalkerConfig {
  moe::MoEConfig backbone{};
  int context_dim = 64;
  int codebooks = 4;  // Q
  int vocab = 256;    // V
  int mtp_dim = 32;
  int mtp_ffn = 64;
  std::uint64_t seed = 0;

  void validate() const {
    backbone.validate();
    require(context_dim >= 1, "TalkerConfig: context_dim must be positive");
    require(codebooks >= 1 && codebooks <= 16, "TalkerConfig: codebooks must be in [1, 16]");
    require(vocab >= 1, "TalkerConfig: vocab must be positive");
    require(mtp_dim >= 1 && mtp_ffn >= 1, "TalkerConfig: MTP sizes must be positive");
  }
};

/// Fixed-capacity key/value buffer for the in-frame residual steps.
struct MtpCache {
  std::size_t capacity = 0;
  std::size_t length = 0;
  std::size_t dim = 0;
  std::vector<double> keys;
  std::vector<double> values;

  MtpCache(std::size_t cap, std::size_t d) : capacity(cap), dim(d), keys(cap * d), values(cap * d) {}

  void append(std::span<const double> k, std::span<const double> v) {
    require(length < capacity, "MtpCache: capacity exceeded");
    std::copy(k.begin(), k.end(), keys.begin() + static_cast<std::ptrdiff_t>(length * dim));
    std::copy(v.begin(), v.end(), values.begin() + static_cast<std::ptrdiff_t>(length * dim));
    ++length;
  }
};

class MtpModule {
 public:
  MtpModule(int d_model, int codebooks, int vocab, int dim, int ffn, std::uint64_t seed)
      : codebooks_(codebooks), dim_(static_cast<std::size_t>(dim)) {
    WeightRng rng(seed);
    const auto m = dim_;
    hidden_proj_ = rng.dense(m, static_cast<std::size_t>(d_model));
    for (int j = 1; j < codebooks; ++j) {
      embed_.push_back(rng.matrix(static_cast<std::size_t>(vocab), m, 1.0));
      heads_.push_back(rng.dense(static_cast<std::size_t>(vocab), m));
    }
    slot_pos_ = rng.matrix(static_cast<std::size_t>(codebooks), m, 0.5);
    wq_ = rng.dense(m, m);
    wk_ = rng.dense(m, m);
    wv_ = rng.dense(m, m);
    wo_ = rng.dense(m, m);
    up_ = rng.dense(static_cast<std::size_t>(ffn), m);
    down_ = rng.dense(m, static_cast<std::size_t>(ffn));
  }

  /// Residual tokens for one frame. `peak_cache` (optional) receives the
  /// largest cache occupancy reached.
  std::vector<int> predict(std::span<const double> backbone_hidden, int cb0,
                           std::size_t* peak_cache = nullptr) const {
    require(all_finite(backbone_hidden), "mtp_predict: non-finite backbone state");
    std::vector<int> residuals;
    if (codebooks_ <= 1) return residuals;

    const Vec base = matvec(hidden_proj_, backbone_hidden);
    MtpCache cache(static_cast<std::size_t>(codebooks_), dim_);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
    int prev = cb0;
    for (int j = 1; j < codebooks_; ++j) {
      const auto step = static_cast<std::size_t>(j - 1);
      Vec x = base;
      add_inplace(x, embed_[step].row(static_cast<std::size_t>(prev)));
      add_inplace(x, slot_pos_.row(step));

      Vec n = rms_norm(x);
      Vec q = matvec(wq_, n);
      cache.append(matvec(wk_, n), matvec(wv_, n));
      Vec scores(cache.length);
      for (std::size_t s = 0; s < cache.length; ++s)
        scores[s] = dot(q, std::span<const double>(cache.keys.data() + s * dim_, dim_)) * scale;
      softmax_inplace(scores);
      Vec ctx(dim_, 0.0);
      for (std::size_t s = 0; s < cache.length; ++s)
        for (std::size_t c = 0; c < dim_; ++c) ctx[c] += scores[s] * cache.values[s * dim_ + c];
      add_inplace(x, matvec(wo_, ctx));

      Vec h = matvec(up_, rms_norm(x));
      for (double& v : h) v = gelu(v);
      add_inplace(x, matvec(down_, h));

      prev = static_cast<int>(argmax(matvec(heads_[step], rms_norm(x))));
      residuals.push_back(prev);
    }
    if (peak_cache) *peak_cache = std::max(*peak_cache, cache.length);
    return residuals;
  }

  int codebooks() const { return codebooks_; }

 private:
  int codebooks_;
  std::size_t dim_;
  Matrix hidden_proj_, slot_pos_, wq_, wk_, wv_, wo_, up_, down_;
  std::vector<Matrix> embed_;  // embeddings of codebooks 0..Q-2
  std::vector<Matrix> heads_;  // heads for codebooks 1..Q-1
};

class Talker {
 public:
  explicit Talker(TalkerConfig config)
      : config_(with_backbone_seed(std::move(config))),
        backbone_(config_.backbone),
        mtp_(config_.backbone.d_model, config_.codebooks, config_.vocab, config_.mtp_dim, config_.mtp_ffn,
             derive_seed(config_.seed, 0x3790)) {
    WeightRng rng(derive_seed(config_.seed, 0x7A1C));
    const auto d = static_cast<std::size_t>(config_.backbone.d_model);
    const auto v = static_cast<std::size_t>(config_.vocab);
    context_proj_ = rng.dense(d, static_cast<std::size_t>(config_.context_dim));
    for (int q = 0; q < config_.codebooks; ++q) codebook_embed_.push_back(rng.matrix(v, d, 0.5));
    bos_ = rng.vector(d, 0.5);
    head_ = rng.dense(v, d);
  }

  const TalkerConfig& config() const { return config_; }
  const moe::MoeModel& backbone() const { return backbone_; }
  const MtpModule& mtp() const { return mtp_; }
  Matrix& mutable_head() { return head_; }

  /// Summed codebook embeddings of a frame, or the start vector for none.
  Vec frame_features(const std::optional<CodecFrame>& frame) const {
    if (!frame) return bos_;
    Vec x(static_cast<std::size_t>(config_.backbone.d_model), 0.0);
    add_inplace(x, codebook_embed_[0].row(static_cast<std::size_t>(frame->cb0)));
    for (std::size_t q = 0; q < frame->residuals.size(); ++q)
      add_inplace(x, codebook_embed_[q + 1].row(static_cast<std::size_t>(frame->residuals[q])));
    return x;
  }

  Vec project_context(std::span<const double> ctx) const {
    require(ctx.size() == static_cast<std::size_t>(config_.context_dim), "talker: context width mismatch");
    return matvec(context_proj_, ctx);
  }

  int predict_cb0(std::span<const double> hidden) const {
    return static_cast<int>(argmax(matvec(head_, rms_norm(hidden))));
  }

 private:
  static TalkerConfig with_backbone_seed(TalkerConfig c) {
    c.validate();
    c.backbone.seed = derive_seed(c.seed, 0xBAC);
    return c;
  }

  TalkerConfig config_;
  moe::MoeModel backbone_;
  MtpModule mtp_;
  Matrix context_proj_;
  std::vector<Matrix> codebook_embed_;
  Vec bos_;
  Matrix head_;
};

struct TalkerState {
  moe::KVCache cache;
  std::size_t start_length = 0;  // cache length when generation began
  std::int64_t frames_emitted = 0;
  std::int64_t next_position = 0;
  std::optional<CodecFrame> last;
  std::size_t mtp_peak_cache = 0;
};

/// Prefills the backbone with prefix context features (chunked) and returns
/// a state ready for frame 0. Prefix positions are (i, i, i).
inline TalkerState begin_generation(const Talker& talker, std::span<const Vec> prefix, std::size_t chunk_size = 4) {
  TalkerState s;
  s.cache = talker.backbone().empty_cache();
  std::vector<Vec> inputs;
  std::vector<tmrope::PositionTriple> triples;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    inputs.push_back(talker.project_context(prefix[i]));
    triples.push_back(tmrope::uniform_triple(static_cast<std::int64_t>(i)));
  }
  if (!inputs.empty()) {
    auto r = moe::prefill_chunked(talker.backbone(), inputs, triples, chunk_size);
    s.cache = std::move(r.cache);
  }
  s.start_length = s.cache.length;
  s.next_position = static_cast<std::int64_t>(prefix.size());
  return s;
}

struct StepResult {
  int cb0 = 0;
  Vec hidden;
};

/// Backbone step for the next frame: codebook 0 and the hidden state used to
/// condition the MTP module. `context` may be empty when no aligned feature
/// exists for this frame.
inline StepResult talker_step(const Talker& talker, TalkerState& state, std::span<const double> context) {
  Vec input = talker.frame_features(state.last);
  if (!context.empty()) add_inplace(input, talker.project_context(context));
  Vec hidden = moe::decode_step(talker.backbone(), state.cache, input,
                                tmrope::uniform_triple(state.next_position++));
  int cb0 = talker.predict_cb0(hidden);
  state.last = CodecFrame{state.frames_emitted++, cb0, {}};
  return {cb0, std::move(hidden)};
}

inline std::vector<int> mtp_predict(const Talker& talker, std::span<const double> backbone_hidden, int cb0,
                                    std::size_t* peak_cache = nullptr) {
  return talker.mtp().predict(backbone_hidden, cb0, peak_cache);
}

/// Full frame: backbone step followed by the residual codebooks.
inline CodecFrame generate_frame(const Talker& talker, TalkerState& state, std::span<const double> context) {
  StepResult step = talker_step(talker, state, context);
  state.last->residuals = mtp_predict(talker, step.hidden, step.cb0, &state.mtp_peak_cache);
  return *state.last;
}

inline std::span<const double> context_for_frame(std::span<const Vec> context, std::int64_t frame) {
  if (frame < 0 || static_cast<std::size_t>(frame) >= context.size()) return {};
  return context[static_cast<std::size_t>(frame)];
}

/// Plain generation loop; the reference for the streaming driver.
inline std::vector<CodecFrame> generate_offline(const Talker& talker, std::span<const Vec> prefix,
                                                std::span<const Vec> context, int n_frames) {
  require(n_frames >= 1, "generate: n_frames must be >= 1");
  TalkerState state = begin_generation(talker, prefix);
  std::vector<CodecFrame> frames;
  for (int i = 0; i < n_frames; ++i) frames.push_back(generate_frame(talker, state, context_for_frame(context, i)));
  return frames;
}

struct Emission {
  CodecFrame frame;
  double time_ms = 0.0;
};

/// Returns how long the consumer held the producer (backpressure), in ms.
using FrameSink = std::function<double(const Emission&)>;

struct StreamTiming {
  double frame_cost_ms = 0.0;
};

/// Emits each frame to `sink` as soon as its last residual is known; the next
/// frame is not started until the sink returns.
inline std::vector<Emission> generate_stream(const Talker& talker, std::span<const Vec> prefix,
                                             std::span<const Vec> context, int n_frames, const FrameSink& sink,
                                             latency::Clock& clock, StreamTiming timing = {}) {
  require(n_frames >= 1, "generate_stream: n_frames must be >= 1");
  TalkerState state = begin_generation(talker, prefix);
  std::vector<Emission> log;
  for (int i = 0; i < n_frames; ++i) {
    CodecFrame frame = generate_frame(talker, state, context_for_frame(context, i));
    clock.advance(timing.frame_cost_ms);
    Emission e{std::move(frame), clock.now()};
    clock.advance(sink(e));
    log.push_back(std::move(e));
  }
  return log;
}

/// Ordered bounded hand-off between a producer and one consumer. push()
/// blocks while the queue is full.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {
    require(capacity >= 1, "BoundedQueue: capacity must be >= 1");
  }

  void push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    require(!closed_, "BoundedQueue: push after close");
    items_.push_back(std::move(item));
    not_empty_.notify_one();
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

inline void write_frames_csv(std::ostream& out, std::span<const CodecFrame> frames) {
  int q = frames.empty() ? 1 : frames.front().codebooks();
  out << "frame,cb0";
  for (int r = 1; r < q; ++r) out << ",r" << r;
  out << '\n';
  for (const auto& f : frames) {
    out << f.index << ',' << f.cb0;
    for (int r : f.residuals) out << ',' << r;
    out << '\n';
  }
}

}  // namespace qomni::talker
