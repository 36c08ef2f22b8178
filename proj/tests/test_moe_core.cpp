// Copyright 2026 The Qomni Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "qomni/moe_core.hpp"

namespace qomni::moe {
namespace {

using tmrope::PositionTriple;

std::vector<Vec> random_inputs(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<Vec> out(n, Vec(d));
  for (auto& v : out)
    for (auto& x : v) x = nd(rng);
  return out;
}

std::vector<PositionTriple> positions(std::size_t n) {
  std::vector<PositionTriple> p;
  for (std::size_t i = 0; i < n; ++i) p.push_back(tmrope::uniform_triple(std::int64_t(i)));
  return p;
}

// Whole-sequence forward pass recomputed from the weights, one layer at a
// time, with every position attending over [0, i].
std::vector<Vec> reference_forward(const MoeModel& m, const std::vector<Vec>& inputs,
                                   const std::vector<PositionTriple>& pos) {
  const auto& cfg = m.config();
  const auto hd = std::size_t(cfg.head_dim);
  std::vector<Vec> x = inputs;
  for (const auto& lw : m.layers()) {
    std::vector<Vec> q, k, v;
    for (std::size_t i = 0; i < x.size(); ++i) {
      Vec n = rms_norm(x[i]);
      q.push_back(matvec(lw.wq, n));
      k.push_back(matvec(lw.wk, n));
      v.push_back(matvec(lw.wv, n));
      for (int h = 0; h < cfg.n_heads; ++h) {
        tmrope::apply_rotary_inplace(std::span(q.back()).subspan(std::size_t(h) * hd, hd), pos[i], m.rope());
        tmrope::apply_rotary_inplace(std::span(k.back()).subspan(std::size_t(h) * hd, hd), pos[i], m.rope());
      }
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      Vec attn(std::size_t(cfg.d_model), 0.0);
      for (int h = 0; h < cfg.n_heads; ++h) {
        std::size_t off = std::size_t(h) * hd;
        std::vector<double> w(i + 1);
        double mx = -INFINITY;
        for (std::size_t j = 0; j <= i; ++j) {
          double s = 0;
          for (std::size_t c = 0; c < hd; ++c) s += q[i][off + c] * k[j][off + c];
          w[j] = s / std::sqrt(double(hd));
          mx = std::max(mx, w[j]);
        }
        double z = 0;
        for (auto& e : w) z += (e = std::exp(e - mx));
        for (std::size_t j = 0; j <= i; ++j)
          for (std::size_t c = 0; c < hd; ++c) attn[off + c] += w[j] / z * v[j][off + c];
      }
      add_inplace(x[i], matvec(lw.wo, attn));
      add_inplace(x[i], moe_forward(rms_norm(x[i]), lw, cfg.top_k));
    }
  }
  return x;
}

MoEConfig small(int layers, std::uint64_t seed) {
  MoEConfig c;
  c.n_layers = layers;
  c.seed = seed;
  return c;
}

TEST(Route, TieKeepsIndexOrder) {
  std::vector<double> logits{0.1, 2.0, 2.0, -1.0};
  auto r = route_logits(logits, 2);
  EXPECT_EQ(r.expert_ids, (std::vector<int>{1, 2}));
  EXPECT_NEAR(r.gates[0], 0.5, 1e-12);
  EXPECT_NEAR(r.gates[1], 0.5, 1e-12);
}

TEST(Route, CraftedRouterInput) {
  MoeModel m(small(1, 3));
  auto& router = m.mutable_layers()[0].router;
  std::fill(router.data.begin(), router.data.end(), 0.0);
  const double logits[] = {0.1, 2.0, 2.0, -1.0};
  for (std::size_t e = 0; e < 4; ++e) router.data[e * router.cols] = logits[e];
  Vec x(64, 0.0);
  x[0] = 1.0;
  EXPECT_EQ(route(x, router, 2).expert_ids, (std::vector<int>{1, 2}));
}

TEST(Route, MatchesBruteForceTopK) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> small_int(-3, 3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> logits(6);
    for (auto& l : logits) l = small_int(rng);  // plenty of ties
    int k = 1 + int(rng() % 6);
    auto r = route_logits(logits, k);
    // Brute force: repeatedly take the first maximum among the unused.
    std::vector<bool> used(6, false);
    std::vector<int> want;
    for (int s = 0; s < k; ++s) {
      int best = -1;
      for (int e = 0; e < 6; ++e)
        if (!used[std::size_t(e)] && (best < 0 || logits[std::size_t(e)] > logits[std::size_t(best)])) best = e;
      used[std::size_t(best)] = true;
      want.push_back(best);
    }
    ASSERT_EQ(r.expert_ids, want);
    double sum = 0;
    for (double g : r.gates) sum += g;
    ASSERT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Route, FullSelectionIsFullSoftmax) {
  std::vector<double> logits{0.3, -1.2, 2.5, 0.0};
  auto r = route_logits(logits, 4);
  double z = 0;
  for (double l : logits) z += std::exp(l);
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_NEAR(r.gates[i], std::exp(logits[std::size_t(r.expert_ids[i])]) / z, 1e-12);
  EXPECT_THROW(route_logits(logits, 0), Error);
  EXPECT_THROW(route_logits(logits, 5), Error);
}

TEST(MoeForward, SingleExpert) {
  MoEConfig c = small(1, 5);
  c.n_experts = 1;
  c.top_k = 1;
  MoeModel m(c);
  auto x = random_inputs(1, 64, 6)[0];
  const auto& lw = m.layers()[0];
  auto got = moe_forward(x, lw, 1);
  auto want = expert_forward(lw.experts[0], x);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(MoeForward, UniformRouterGivesMean) {
  MoeModel m(small(1, 7));
  auto& lw = m.mutable_layers()[0];
  std::fill(lw.router.data.begin(), lw.router.data.end(), 0.0);
  auto x = random_inputs(1, 64, 8)[0];
  auto got = moe_forward(x, lw, 4);
  Vec mean(64, 0.0);
  for (const auto& e : lw.experts) {
    auto y = expert_forward(e, x);
    for (std::size_t i = 0; i < 64; ++i) mean[i] += y[i] / 4.0;
  }
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(got[i], mean[i], 1e-12);
}

TEST(MoeForward, LinearInExpertOutputs) {
  MoeModel m(small(1, 9));
  auto x = random_inputs(1, 64, 10)[0];
  auto base = moe_forward(x, m.layers()[0], 2);
  for (auto& e : m.mutable_layers()[0].experts)
    for (auto& w : e.down.data) w *= 2.0;
  auto doubled = moe_forward(x, m.layers()[0], 2);
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(doubled[i], 2.0 * base[i], 1e-12);
}

TEST(Prefill, MatchesReferenceForward) {
  for (int layers : {1, 2, 4}) {
    MoeModel m(small(layers, 11));
    auto in = random_inputs(16, 64, 12);
    auto pos = positions(16);
    auto got = prefill_offline(m, in, pos);
    auto want = reference_forward(m, in, pos);
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t c = 0; c < 64; ++c) ASSERT_NEAR(got.hidden[i][c], want[i][c], 1e-9);
  }
}

TEST(Prefill, ChunkSizesAgree) {
  MoeModel m(small(2, 13));
  auto in = random_inputs(16, 64, 14);
  auto pos = positions(16);
  auto off = prefill_offline(m, in, pos);
  for (std::size_t chunk : {1u, 3u, 5u, 16u, 40u}) {
    auto r = prefill_chunked(m, in, pos, chunk);
    ASSERT_EQ(r.cache.length, 16u);
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t c = 0; c < 64; ++c) ASSERT_NEAR(r.hidden[i][c], off.hidden[i][c], 1e-6);
    for (std::size_t l = 0; l < 2; ++l)
      for (std::size_t j = 0; j < r.cache.keys[l].size(); ++j) {
        ASSERT_NEAR(r.cache.keys[l][j], off.cache.keys[l][j], 1e-6);
        ASSERT_NEAR(r.cache.values[l][j], off.cache.values[l][j], 1e-6);
      }
  }
  EXPECT_THROW(prefill_chunked(m, in, pos, 0), Error);
}

TEST(Prefill, PrefixConsistency) {
  MoeModel m(small(2, 15));
  auto in = random_inputs(12, 64, 16);
  auto pos = positions(12);
  auto full = prefill_offline(m, in, pos);
  for (std::size_t n = 1; n <= 12; ++n) {
    auto part = prefill_offline(m, std::span(in).first(n), std::span(pos).first(n));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 64; ++c) ASSERT_EQ(part.hidden[i][c], full.hidden[i][c]);
  }
}

TEST(Prefill, EmptyExtendLeavesCache) {
  MoeModel m(small(1, 17));
  auto in = random_inputs(4, 64, 18);
  auto pos = positions(4);
  auto r = prefill_offline(m, in, pos);
  KVCache before = r.cache;
  auto h = m.extend(r.cache, {}, {});
  EXPECT_TRUE(h.empty());
  EXPECT_EQ(r.cache, before);
}

TEST(DecodeStep, MatchesOfflineLastPosition) {
  MoeModel m(small(3, 19));
  auto in = random_inputs(10, 64, 20);
  auto pos = positions(10);
  auto r = prefill_offline(m, std::span(in).first(4), std::span(pos).first(4));
  for (std::size_t i = 4; i < 10; ++i) {
    auto h = decode_step(m, r.cache, in[i], pos[i]);
    EXPECT_EQ(r.cache.length, i + 1);
    auto want = reference_forward(m, {in.begin(), in.begin() + std::ptrdiff_t(i + 1)},
                                  {pos.begin(), pos.begin() + std::ptrdiff_t(i + 1)});
    for (std::size_t c = 0; c < 64; ++c) ASSERT_NEAR(h[c], want.back()[c], 1e-9);
  }
}

TEST(MoeModel, ConfigChecks) {
  MoEConfig c;
  c.n_layers = 5;
  EXPECT_THROW(MoeModel{c}, Error);
  c = MoEConfig{};
  c.top_k = 5;
  EXPECT_THROW(MoeModel{c}, Error);
  c = MoEConfig{};
  c.head_dim = 16;
  EXPECT_THROW(MoeModel{c}, Error);
  MoeModel ok{MoEConfig{}};
  EXPECT_THROW(ok.embed(512), Error);
  EXPECT_EQ(ok.embed(3).size(), 64u);
}

TEST(MoeModel, SeedDeterminesWeights) {
  MoeModel a(small(1, 21)), b(small(1, 21)), c(small(1, 22));
  EXPECT_EQ(a.embed(7), b.embed(7));
  EXPECT_NE(a.embed(7), c.embed(7));
}

}  // namespace
}  // namespace qomni::moe
