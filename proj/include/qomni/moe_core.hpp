// Copyright 2026 The Qomni Authors.
// SPDX-License-Identifier: Apache-2.0

// Toy mixture-of-experts transformer with TM-RoPE attention, an append-only
// KV cache and chunked prefill. Each layer is
//
//   x += Attention(RMSNorm(x));  x += MoE(RMSNorm(x))
//
// Chunked prefill, offline prefill and token-by-token decode all run the same
// per-token arithmetic, so their outputs agree exactly.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "qomni/core.hpp"
#include "qomni/tmrope.hpp"

namespace qomni::moe {

using tmrope::PositionTriple;

struct MoEConfig {
  int d_model = 64;
  int n_heads = 2;
  int head_dim = 32;
  int n_experts = 4;
  int top_k = 2;
  int ffn_dim = 64;
  int n_layers = 1;
  int vocab = 512;
  std::uint64_t seed = 0;
  std::array<int, 3> rope_split = tmrope::scaled_split(32);
  double rope_theta = 10000.0;

  void validate() const {
    require(d_model > 0 && n_heads > 0 && head_dim > 0, "MoEConfig: sizes must be positive");
    require(head_dim * n_heads == d_model, "MoEConfig: head_dim * n_heads must equal d_model");
    require(n_experts >= 1 && top_k >= 1 && top_k <= n_experts, "MoEConfig: need 1 <= top_k <= n_experts");
    require(ffn_dim > 0, "MoEConfig: ffn_dim must be positive");
    require(n_layers >= 1 && n_layers <= 4, "MoEConfig: n_layers must be in [1, 4]");
    require(vocab >= 1, "MoEConfig: vocab must be positive");
  }
};

struct Routing {
  std::vector<int> expert_ids;
  std::vector<double> gates;
};

/// Top-k selection (ties to the lower index) with softmax over the winners.
inline Routing route_logits(std::span<const double> logits, int k) {
  require(k >= 1 && static_cast<std::size_t>(k) <= logits.size(), "route: k out of range");
  std::vector<int> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return logits[static_cast<std::size_t>(a)] > logits[static_cast<std::size_t>(b)]; });
  Routing r;
  r.expert_ids.assign(order.begin(), order.begin() + k);
  for (int id : r.expert_ids) r.gates.push_back(logits[static_cast<std::size_t>(id)]);
  softmax_inplace(r.gates);
  return r;
}

struct ExpertWeights {
  Matrix up;    // ffn_dim x d_model
  Matrix down;  // d_model x ffn_dim
};

inline Vec expert_forward(const ExpertWeights& e, std::span<const double> x) {
  Vec h = matvec(e.up, x);
  for (double& v : h) v = gelu(v);
  return matvec(e.down, h);
}

struct LayerWeights {
  Matrix wq, wk, wv, wo;
  Matrix router;  // n_experts x d_model
  std::vector<ExpertWeights> experts;
};

inline Routing route(std::span<const double> hidden, const Matrix& router, int k) {
  require(all_finite(hidden), "route: non-finite hidden state");
  return route_logits(matvec(router, hidden), k);
}

/// Gate-weighted sum of the selected experts' outputs.
inline Vec moe_forward(std::span<const double> hidden, const LayerWeights& layer, int top_k) {
  Routing r = route(hidden, layer.router, top_k);
  Vec out(hidden.size(), 0.0);
  for (std::size_t i = 0; i < r.expert_ids.size(); ++i) {
    Vec e = expert_forward(layer.experts[static_cast<std::size_t>(r.expert_ids[i])], hidden);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += r.gates[i] * e[c];
  }
  return out;
}

/// Rotated keys and values per layer, one d_model row per position.
struct KVCache {
  std::vector<std::vector<double>> keys;
  std::vector<std::vector<double>> values;
  std::size_t length = 0;

  explicit KVCache(int n_layers = 1)
      : keys(static_cast<std::size_t>(n_layers)), values(static_cast<std::size_t>(n_layers)) {}

  bool operator==(const KVCache&) const = default;
};

class MoeModel {
 public:
  explicit MoeModel(const MoEConfig& config) : config_(config) {
    config_.validate();
    alloc_ = tmrope::build_angle_allocation(config_.head_dim, config_.rope_split, config_.rope_theta, false);
    WeightRng rng(derive_seed(config_.seed, 0x30E));
    const auto d = static_cast<std::size_t>(config_.d_model);
    const auto f = static_cast<std::size_t>(config_.ffn_dim);
    embedding_ = rng.matrix(static_cast<std::size_t>(config_.vocab), d, 1.0);
    for (int l = 0; l < config_.n_layers; ++l) {
      LayerWeights lw;
      lw.wq = rng.dense(d, d);
      lw.wk = rng.dense(d, d);
      lw.wv = rng.dense(d, d);
      lw.wo = rng.dense(d, d);
      lw.router = rng.dense(static_cast<std::size_t>(config_.n_experts), d);
      for (int e = 0; e < config_.n_experts; ++e) lw.experts.push_back({rng.dense(f, d), rng.dense(d, f)});
      layers_.push_back(std::move(lw));
    }
  }

  const MoEConfig& config() const { return config_; }
  const tmrope::AngleAllocation& rope() const { return alloc_; }
  const std::vector<LayerWeights>& layers() const { return layers_; }
  std::vector<LayerWeights>& mutable_layers() { return layers_; }

  KVCache empty_cache() const { return KVCache(config_.n_layers); }

  Vec embed(int token_id) const {
    require(token_id >= 0 && token_id < config_.vocab, "embed: token id out of range");
    auto r = embedding_.row(static_cast<std::size_t>(token_id));
    return Vec(r.begin(), r.end());
  }

  std::vector<Vec> embed(std::span<const int> ids) const {
    std::vector<Vec> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(embed(id));
    return out;
  }

  /// Runs a chunk of new positions through every layer, appending to the
  /// cache. Returns the final hidden state of each new position.
  std::vector<Vec> extend(KVCache& cache, std::span<const Vec> inputs,
                          std::span<const PositionTriple> triples) const {
    require(inputs.size() == triples.size(), "extend: inputs and triples differ in length");
    require(cache.keys.size() == layers_.size(), "extend: cache layer count mismatch");
    const auto d = static_cast<std::size_t>(config_.d_model);
    std::vector<Vec> x(inputs.begin(), inputs.end());
    for (const auto& v : x) require(v.size() == d, "extend: input width != d_model");
    const std::size_t base = cache.length;

    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const LayerWeights& lw = layers_[l];
      std::vector<Vec> queries(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        Vec n = rms_norm(x[i]);
        queries[i] = matvec(lw.wq, n);
        Vec k = matvec(lw.wk, n);
        Vec v = matvec(lw.wv, n);
        rotate_heads(queries[i], triples[i]);
        rotate_heads(k, triples[i]);
        cache.keys[l].insert(cache.keys[l].end(), k.begin(), k.end());
        cache.values[l].insert(cache.values[l].end(), v.begin(), v.end());
      }
      for (std::size_t i = 0; i < x.size(); ++i) {
        Vec attn = attend(cache, l, queries[i], base + i);
        add_inplace(x[i], matvec(lw.wo, attn));
        Vec n = rms_norm(x[i]);
        add_inplace(x[i], moe_forward(n, lw, config_.top_k));
      }
    }
    cache.length = base + x.size();
    return x;
  }

 private:
  void rotate_heads(Vec& v, const PositionTriple& pos) const {
    const auto hd = static_cast<std::size_t>(config_.head_dim);
    for (int h = 0; h < config_.n_heads; ++h)
      tmrope::apply_rotary_inplace(std::span<double>(v).subspan(static_cast<std::size_t>(h) * hd, hd), pos, alloc_);
  }

  // Causal multi-head attention of one query against cache rows [0, pos].
  Vec attend(const KVCache& cache, std::size_t layer, const Vec& q, std::size_t pos) const {
    const auto hd = static_cast<std::size_t>(config_.head_dim);
    const auto d = static_cast<std::size_t>(config_.d_model);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    const auto& keys = cache.keys[layer];
    const auto& values = cache.values[layer];
    Vec out(d, 0.0);
    Vec scores(pos + 1);
    for (int h = 0; h < config_.n_heads; ++h) {
      const std::size_t off = static_cast<std::size_t>(h) * hd;
      std::span<const double> qh(q.data() + off, hd);
      for (std::size_t j = 0; j <= pos; ++j)
        scores[j] = dot(qh, std::span<const double>(keys.data() + j * d + off, hd)) * scale;
      softmax_inplace(scores);
      for (std::size_t j = 0; j <= pos; ++j)
        for (std::size_t c = 0; c < hd; ++c) out[off + c] += scores[j] * values[j * d + off + c];
    }
    return out;
  }

  MoEConfig config_;
  tmrope::AngleAllocation alloc_;
  Matrix embedding_;
  std::vector<LayerWeights> layers_;
};

struct PrefillResult {
  std::vector<Vec> hidden;
  KVCache cache;
};

/// Feeds the sequence in chunks of `chunk_size` positions.
inline PrefillResult prefill_chunked(const MoeModel& model, std::span<const Vec> inputs,
                                     std::span<const PositionTriple> triples, std::size_t chunk_size) {
  require(chunk_size >= 1, "prefill_chunked: chunk_size must be >= 1");
  require(inputs.size() == triples.size(), "prefill_chunked: inputs and triples differ in length");
  PrefillResult r{{}, model.empty_cache()};
  r.hidden.reserve(inputs.size());
  for (std::size_t s = 0; s < inputs.size(); s += chunk_size) {
    std::size_t n = std::min(chunk_size, inputs.size() - s);
    auto h = model.extend(r.cache, inputs.subspan(s, n), triples.subspan(s, n));
    for (auto& v : h) r.hidden.push_back(std::move(v));
  }
  return r;
}

/// Single-chunk prefill, the reference for every other schedule.
inline PrefillResult prefill_offline(const MoeModel& model, std::span<const Vec> inputs,
                                     std::span<const PositionTriple> triples) {
  return prefill_chunked(model, inputs, triples, std::max<std::size_t>(1, inputs.size()));
}

/// One decode position; the cache grows by one.
inline Vec decode_step(const MoeModel& model, KVCache& cache, const Vec& input, const PositionTriple& triple) {
  auto h = model.extend(cache, std::span<const Vec>(&input, 1), std::span<const PositionTriple>(&triple, 1));
  return std::move(h.front());
}

}  // namespace qomni::moe
