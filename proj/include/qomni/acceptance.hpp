// Copyright 2026 The Qomni Authors.
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate. Each criterion runs at its pinned tolerance and time
// budget and reports one pass/fail line. Shared by the acceptance test binary
// and `qomni check-all`.

#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iterator>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qomni/audio_frontend.hpp"
#include "qomni/code2wav.hpp"
#include "qomni/commands.hpp"
#include "qomni/latency_sim.hpp"
#include "qomni/moe_core.hpp"
#include "qomni/talker_stream.hpp"
#include "qomni/tmrope.hpp"

namespace qomni::acceptance {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  double budget_s = 0.0;
};

struct Options {
  std::string profile_path = "profiles/table2.json";
  std::string scratch_dir = "acceptance_scratch";
  int seeds = 20;
};

namespace detail {

/// Collects failures; the first few are kept for the report.
class Tally {
 public:
  void expect(bool cond, const std::string& what) {
    ++checks_;
    if (!cond) {
      ++failures_;
      if (notes_.size() < 5) notes_.push_back(what);
    }
  }
  bool ok() const { return failures_ == 0; }
  std::string summary(const std::string& extra = "") const {
    std::ostringstream s;
    s << checks_ << " checks, " << failures_ << " failed";
    if (!extra.empty()) s << "; " << extra;
    for (const auto& n : notes_) s << "; " << n;
    return s.str();
  }

 private:
  int checks_ = 0;
  int failures_ = 0;
  std::vector<std::string> notes_;
};

inline std::int64_t uniform_int(WeightRng& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
}

inline std::vector<tmrope::VideoFrame> random_frames(WeightRng& rng, std::int64_t min_gap_ms) {
  std::vector<tmrope::VideoFrame> frames;
  std::int64_t n = uniform_int(rng, 1, 4);
  std::int64_t ts = uniform_int(rng, 0, 300);
  std::int64_t rows = uniform_int(rng, 1, 4), cols = uniform_int(rng, 1, 4);
  for (std::int64_t i = 0; i < n; ++i) {
    frames.push_back({ts, rows, cols});
    ts += uniform_int(rng, min_gap_ms, 600);
  }
  return frames;
}

inline tmrope::ModalitySegment random_segment(WeightRng& rng) {
  using tmrope::ModalitySegment;
  switch (uniform_int(rng, 0, 4)) {
    case 0: return ModalitySegment::text(uniform_int(rng, 1, 20));
    case 1: return ModalitySegment::audio(uniform_int(rng, 1, 3000));
    case 2: return ModalitySegment::image(uniform_int(rng, 1, 6), uniform_int(rng, 1, 6));
    case 3: return ModalitySegment::video(random_frames(rng, 1));
    default:
      return ModalitySegment::audiovisual(ModalitySegment::audio(uniform_int(rng, 80, 2000)),
                                          ModalitySegment::video(random_frames(rng, 80)));
  }
}

/// Scans the emitted IDs: every segment must start at one plus the largest ID
/// of everything before it.
inline bool contiguous(std::span<const tmrope::ModalitySegment> segs, std::span<const tmrope::PositionTriple> ids,
                       std::int64_t start_id) {
  std::size_t off = 0;
  std::int64_t prior_max = start_id - 1;
  for (const auto& s : segs) {
    const auto n = static_cast<std::size_t>(s.token_count);
    if (off + n > ids.size()) return false;
    std::int64_t lo = INT64_MAX, hi = INT64_MIN;
    for (std::size_t i = off; i < off + n; ++i)
      for (std::int64_t v : {ids[i].t, ids[i].h, ids[i].w}) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    if (lo != prior_max + 1) return false;
    prior_max = hi;
    off += n;
  }
  return off == ids.size();
}

/// Plain 1-D rotary embedding over adjacent channel pairs.
inline Vec rope_1d(std::span<const double> v, std::int64_t pos, double theta) {
  Vec out(v.begin(), v.end());
  const std::size_t d = v.size();
  for (std::size_t i = 0; i < d / 2; ++i) {
    double f = std::pow(theta, -2.0 * static_cast<double>(i) / static_cast<double>(d));
    double a = static_cast<double>(pos) * f;
    out[2 * i] = v[2 * i] * std::cos(a) - v[2 * i + 1] * std::sin(a);
    out[2 * i + 1] = v[2 * i] * std::sin(a) + v[2 * i + 1] * std::cos(a);
  }
  return out;
}

inline std::vector<double> random_wave(WeightRng& rng, std::size_t n) {
  std::vector<double> w(n);
  double f = 200.0 + 2000.0 * rng.uniform();
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.3 * std::sin(6.283185307179586 * f * static_cast<double>(i) / 16000.0) + 0.05 * rng.symmetric(1.0);
  return w;
}

inline std::vector<std::vector<double>> random_chunks(WeightRng& rng, const std::vector<double>& w) {
  std::vector<std::vector<double>> chunks;
  std::size_t pos = 0;
  while (pos < w.size()) {
    std::size_t len = std::min(static_cast<std::size_t>(uniform_int(rng, 1, 6)) * audio::kChunkGranularity,
                               w.size() - pos);
    chunks.emplace_back(w.begin() + static_cast<std::ptrdiff_t>(pos),
                        w.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return chunks;
}

inline std::vector<talker::CodecFrame> random_frames_codec(WeightRng& rng, int n, int q, int vocab) {
  std::vector<talker::CodecFrame> frames;
  for (int i = 0; i < n; ++i) {
    talker::CodecFrame f{i, static_cast<int>(uniform_int(rng, 0, vocab - 1)), {}};
    for (int r = 1; r < q; ++r) f.residuals.push_back(static_cast<int>(uniform_int(rng, 0, vocab - 1)));
    frames.push_back(std::move(f));
  }
  return frames;
}

inline std::vector<Vec> random_vectors(WeightRng& rng, std::size_t n, std::size_t d) {
  std::vector<Vec> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(rng.vector(d, 1.0));
  return out;
}

inline std::vector<talker::CodecFrame> stream_frames_threaded(const talker::Talker& tk, std::span<const Vec> context,
                                                              int n_frames) {
  talker::BoundedQueue<talker::CodecFrame> queue(3);
  std::vector<talker::CodecFrame> got;
  std::thread consumer([&] {
    while (auto f = queue.pop()) got.push_back(std::move(*f));
  });
  latency::Clock clock;
  talker::generate_stream(tk, {}, context, n_frames,
                          [&](const talker::Emission& e) {
                            queue.push(e.frame);
                            return 0.0;
                          },
                          clock);
  queue.close();
  consumer.join();
  return got;
}

inline std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace detail

// 1. Table-2 first-packet totals via `simulate --check`.
inline CriterionResult table2_totals(const Options& opt) {
  struct Row {
    const char* modality;
    int concurrency;
    double total;
  };
  const Row rows[] = {{"audio", 1, 234},  {"video", 1, 547},  {"audio", 4, 728},
                      {"video", 4, 1517}, {"audio", 6, 1172}, {"video", 6, 2284}};
  detail::Tally t;
  std::ostringstream got;
  for (const Row& r : rows) {
    std::ostringstream out, err;
    cli::SimulateArgs a;
    a.profile_path = opt.profile_path;
    a.modality = r.modality;
    a.concurrency = r.concurrency;
    a.check = true;
    int code = cli::cmd_simulate(a, out, err);
    t.expect(code == cli::kExitOk, std::string("simulate --check ") + r.modality + "/" +
                                       std::to_string(r.concurrency) + " exit " + std::to_string(code) + " " +
                                       err.str());
    auto table = latency::ProfileTable::load(opt.profile_path);
    const auto* e = table.find(latency::parse_modality(r.modality), r.concurrency);
    t.expect(e != nullptr, "missing profile");
    if (!e) continue;
    double fp = latency::simulate_stream(e->profile, 1, false).first_packet_ms;
    t.expect(std::abs(fp - r.total) <= cli::kTotalToleranceMs,
             std::string(r.modality) + "/" + std::to_string(r.concurrency) + " first packet " + std::to_string(fp));
    got << r.modality << "/" << r.concurrency << "=" << fp << "ms ";
  }
  return {1, "Table-2 first-packet totals within +/-5 ms", t.ok(), t.summary(got.str()), 0, 1.0};
}

// 2. RTF formula vs reported 0.47 / 0.56 / 0.66.
inline CriterionResult table2_rtf(const Options& opt) {
  const std::pair<int, double> rows[] = {{1, 0.47}, {4, 0.56}, {6, 0.66}};
  auto table = latency::ProfileTable::load(opt.profile_path);
  detail::Tally t;
  std::ostringstream got;
  for (auto m : {latency::ProfileModality::Audio, latency::ProfileModality::Video}) {
    for (auto [c, want] : rows) {
      const auto* e = table.find(m, c);
      t.expect(e != nullptr, "missing profile");
      if (!e) continue;
      double r = latency::rtf(e->profile);
      t.expect(std::abs(r - want) <= cli::kRtfTolerance, "rtf " + std::to_string(r) + " vs " + std::to_string(want));
      if (m == latency::ProfileModality::Audio) got << c << "-conc=" << r << " ";
    }
  }
  return {2, "Generation RTF within +/-0.03", t.ok(), t.summary(got.str()), 0, 1.0};
}

// 3. Playback continuity.
inline CriterionResult continuity(const Options&) {
  WeightRng rng(0xC0'17);
  detail::Tally t;
  int generated = 0;
  while (generated < 200) {
    latency::LatencyProfile p;
    p.preproc_ms = 1 + 300 * rng.uniform();
    p.thinker_ttft_ms = 1 + 1000 * rng.uniform();
    p.talker_ttft_ms = 1 + 800 * rng.uniform();
    p.mtp_per_token_ms = 0.5 + 30 * rng.uniform();
    p.codec_per_code_ms = 0.5 + 30 * rng.uniform();
    p.thinker_tps = 15 + 300 * rng.uniform();
    p.talker_tps = 15 + 300 * rng.uniform();
    if (latency::rtf(p) >= 1.0) continue;
    ++generated;
    bool async = generated % 2 == 0;
    auto tl = latency::simulate_stream(p, 500, async, {1 + generated % 3, 80.0 * (generated % 4)});
    t.expect(tl.underrun_count == 0, "underruns with rtf " + std::to_string(latency::rtf(p)));
  }
  latency::LatencyProfile slow{latency::ProfileModality::Audio, 1, 72, 88, 57, 50, 50, 10, 10};
  auto tl = latency::simulate_stream(slow, 500, false);
  t.expect(latency::rtf(slow) > 1.0 && tl.underrun_count > 0, "rtf>1 profile produced no underruns");
  return {3, "Continuity: rtf<1 never underruns, rtf>1 does", t.ok(),
          t.summary("rtf>1 underruns=" + std::to_string(tl.underrun_count)), 0, 10.0};
}

// 4. TM-RoPE suite.
inline CriterionResult tmrope_suite(const Options&) {
  using namespace tmrope;
  WeightRng rng(0x70'9E);
  detail::Tally t;

  for (int c = 0; c < 1000; ++c) {
    std::vector<ModalitySegment> segs;
    const auto n = detail::uniform_int(rng, 1, 6);
    for (std::int64_t i = 0; i < n; ++i) segs.push_back(detail::random_segment(rng));
    const auto start = detail::uniform_int(rng, 0, 50);
    auto ids = assign_positions(segs, start);
    t.expect(detail::contiguous(segs, ids, start), "contiguity violated in case " + std::to_string(c));
  }

  const auto alloc_default = build_angle_allocation(128, {24, 20, 20});
  const auto alloc_1d = build_angle_allocation(128, {64, 0, 0});
  for (int c = 0; c < 100; ++c) {
    auto ids = assign_positions({ModalitySegment::text(detail::uniform_int(rng, 1, 40))},
                                detail::uniform_int(rng, 0, 5000));
    for (const auto& p : ids) t.expect(p.t == p.h && p.h == p.w, "text triple components differ");
    const auto& p = ids[static_cast<std::size_t>(detail::uniform_int(rng, 0, static_cast<std::int64_t>(ids.size()) - 1))];
    Vec v = rng.vector(128, 1.0);
    Vec ref = detail::rope_1d(v, p.t, 10000.0);
    t.expect(cli::max_abs_diff(apply_rotary(v, p, alloc_1d), ref) <= 1e-12, "(64,0,0) text rotary != 1-D RoPE");
    t.expect(cli::max_abs_diff(apply_rotary(v, p, alloc_default), ref) <= 1e-12, "24/20/20 text rotary != 1-D RoPE");
  }

  for (int c = 0; c < 1000; ++c) {
    const auto d = detail::uniform_int(rng, 1, 100000);
    const auto n = ModalitySegment::audio(d).token_count;
    t.expect(n * 80 >= d && d > (n - 1) * 80, "audio rate law for " + std::to_string(d) + " ms");
    t.expect(static_cast<std::int64_t>(assign_positions({ModalitySegment::audio(d)}).size()) == n,
             "audio triple count");
  }

  for (int c = 0; c < 200; ++c) {
    PositionTriple p{detail::uniform_int(rng, 0, 4000), detail::uniform_int(rng, 0, 4000),
                     detail::uniform_int(rng, 0, 4000)};
    PositionTriple p2{detail::uniform_int(rng, 0, 4000), detail::uniform_int(rng, 0, 4000),
                      detail::uniform_int(rng, 0, 4000)};
    PositionTriple delta{detail::uniform_int(rng, 0, 4000), detail::uniform_int(rng, 0, 4000),
                         detail::uniform_int(rng, 0, 4000)};
    Vec q = rng.vector(128, 1.0), k = rng.vector(128, 1.0);
    Vec rq = apply_rotary(q, p, alloc_default);
    t.expect(std::abs(l2_norm(rq) - l2_norm(q)) <= 1e-9 * l2_norm(q), "norm not preserved");
    double a = dot(rq, apply_rotary(k, p2, alloc_default));
    double b = dot(apply_rotary(q, {p.t + delta.t, p.h + delta.h, p.w + delta.w}, alloc_default),
                   apply_rotary(k, {p2.t + delta.t, p2.h + delta.h, p2.w + delta.w}, alloc_default));
    t.expect(std::abs(a - b) <= 1e-6 * std::max(std::abs(a), l2_norm(q) * l2_norm(k) * 1e-3),
             "relative-position property violated");
  }
  return {4, "TM-RoPE contiguity, 1-D equivalence, rate law, norm, relative position", t.ok(), t.summary(), 0, 30.0};
}

// 5. Streaming == offline for all four streaming stages.
inline CriterionResult streaming_equivalence(const Options& opt) {
  detail::Tally t;
  const auto& enc = audio::default_encoder();
  for (int s = 0; s < opt.seeds; ++s) {
    WeightRng rng(derive_seed(0x57E, static_cast<std::uint64_t>(s)));

    // audio_frontend
    auto wave = detail::random_wave(rng, static_cast<std::size_t>(detail::uniform_int(rng, 1, 60)) * audio::kChunkGranularity);
    double window = 1.0 + 7.0 * rng.uniform();
    auto off = enc.encode_offline(wave, window);
    auto str = audio::encode_streaming(enc, detail::random_chunks(rng, wave), window);
    t.expect(str.tokens == off.tokens && cli::max_abs_diff(str.data, off.data) <= 1e-6, "frontend seed " + std::to_string(s));

    // moe_core
    moe::MoEConfig mc;
    mc.seed = static_cast<std::uint64_t>(s);
    mc.n_layers = 1 + s % 2;
    moe::MoeModel model(mc);
    const auto n = static_cast<std::size_t>(detail::uniform_int(rng, 1, 64));
    auto inputs = detail::random_vectors(rng, n, static_cast<std::size_t>(mc.d_model));
    std::vector<tmrope::PositionTriple> triples;
    for (std::size_t i = 0; i < n; ++i) triples.push_back(tmrope::uniform_triple(static_cast<std::int64_t>(i)));
    auto ref = moe::prefill_offline(model, inputs, triples);
    for (std::size_t cs : {std::size_t{1}, std::size_t{2}, std::size_t{3}, std::size_t{5}, std::size_t{8}, n}) {
      auto r = moe::prefill_chunked(model, inputs, triples, cs);
      double worst = 0.0;
      for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, cli::max_abs_diff(r.hidden[i], ref.hidden[i]));
      t.expect(worst <= 1e-6 && r.cache.length == n, "moe chunk " + std::to_string(cs) + " seed " + std::to_string(s));
    }

    // talker_stream
    talker::TalkerConfig tc;
    tc.seed = static_cast<std::uint64_t>(s);
    talker::Talker tk(tc);
    const int frames = static_cast<int>(detail::uniform_int(rng, 1, 64));
    auto context = detail::random_vectors(rng, static_cast<std::size_t>(frames), static_cast<std::size_t>(tc.context_dim));
    t.expect(detail::stream_frames_threaded(tk, context, frames) == talker::generate_offline(tk, {}, context, frames),
             "talker seed " + std::to_string(s));

    // code2wav
    code2wav::RendererConfig rc;
    rc.seed = static_cast<std::uint64_t>(s);
    rc.receptive_frames = static_cast<int>(detail::uniform_int(rng, 1, 24));
    code2wav::Renderer renderer(rc);
    auto cf = detail::random_frames_codec(rng, static_cast<int>(detail::uniform_int(rng, 1, 64)), rc.codebooks, rc.vocab);
    code2wav::RenderState st;
    std::vector<double> streamed;
    for (const auto& f : cf) {
      auto x = code2wav::decode_frame(renderer, f, st);
      streamed.insert(streamed.end(), x.begin(), x.end());
    }
    t.expect(cli::max_abs_diff(streamed, code2wav::decode_offline(renderer, cf)) <= 1e-6,
             "code2wav seed " + std::to_string(s));
  }
  return {5, "Streaming == offline (frontend, MoE prefill, talker, code2wav)", t.ok(),
          t.summary(std::to_string(opt.seeds) + " seeds per stage"), 0, 120.0};
}

// 6. Rate laws.
inline CriterionResult rate_laws(const Options&) {
  detail::Tally t;
  WeightRng rng(0x2A7E);
  auto wave = detail::random_wave(rng, 32000);
  auto tokens = audio::default_encoder().encode_offline(wave, 4.0);
  t.expect(tokens.tokens == 25, "2 s -> " + std::to_string(tokens.tokens) + " tokens");
  code2wav::Renderer renderer(code2wav::RendererConfig{});
  auto frames = detail::random_frames_codec(rng, 25, 4, 256);
  code2wav::RenderState st;
  std::size_t samples = 0;
  for (const auto& f : frames) samples += code2wav::decode_frame(renderer, f, st).size();
  t.expect(samples == 48000, "25 frames -> " + std::to_string(samples) + " samples");
  return {6, "Rate laws: 2 s -> 25 tokens, 25 frames -> 48000 samples", t.ok(),
          t.summary("tokens=" + std::to_string(tokens.tokens) + " samples=" + std::to_string(samples)), 0, 5.0};
}

// 7. Demo determinism.
inline CriterionResult demo_determinism(const Options& opt) {
  namespace fs = std::filesystem;
  detail::Tally t;
  const fs::path a = fs::path(opt.scratch_dir) / "demo_a";
  const fs::path b = fs::path(opt.scratch_dir) / "demo_b";
  for (const auto& dir : {a, b}) {
    fs::remove_all(dir);
    cli::DemoArgs args;
    args.seed = 42;
    args.out_dir = dir.string();
    std::ostringstream out, err;
    int code = cli::cmd_demo(args, out, err);
    std::string msg = err.str();
    while (!msg.empty() && msg.back() == '\n') msg.pop_back();
    t.expect(code == cli::kExitOk, "demo exit " + std::to_string(code) + ": " + msg);
  }
  for (const char* name : {"demo.wav", "frames.csv", "positions.csv", "manifest.json"}) {
    auto x = detail::slurp(a / name);
    t.expect(!x.empty() && x == detail::slurp(b / name), std::string(name) + " differs between runs");
  }
  return {7, "Determinism: demo --seed 42 twice is byte-identical", t.ok(), t.summary(), 0, 10.0};
}

// 8. Causality.
inline CriterionResult causality(const Options& opt) {
  detail::Tally t;
  for (int s = 0; s < std::max(4, opt.seeds / 4); ++s) {
    WeightRng rng(derive_seed(0xCA05, static_cast<std::uint64_t>(s)));

    // Talker: mutating context after frame k leaves frames 0..k unchanged.
    talker::TalkerConfig tc;
    tc.seed = static_cast<std::uint64_t>(s);
    talker::Talker tk(tc);
    const int n = 24;
    auto ctx = detail::random_vectors(rng, n, static_cast<std::size_t>(tc.context_dim));
    auto base = talker::generate_offline(tk, {}, ctx, n);
    const auto k = static_cast<std::size_t>(detail::uniform_int(rng, 0, n - 2));
    auto mutated = ctx;
    for (std::size_t i = k + 1; i < mutated.size(); ++i) mutated[i] = rng.vector(mutated[i].size(), 3.0);
    auto alt = talker::generate_offline(tk, {}, mutated, n);
    t.expect(std::equal(base.begin(), base.begin() + static_cast<std::ptrdiff_t>(k + 1), alt.begin()),
             "talker frame depends on future context");

    // Renderer: perturbing frame j changes nothing before j * 1920.
    code2wav::Renderer renderer(code2wav::RendererConfig{});
    auto frames = detail::random_frames_codec(rng, 16, 4, 256);
    auto w0 = code2wav::decode_offline(renderer, frames);
    const auto j = static_cast<std::size_t>(detail::uniform_int(rng, 0, 15));
    frames[j].cb0 = (frames[j].cb0 + 1) % 256;
    auto w1 = code2wav::decode_offline(renderer, frames);
    const std::size_t cut = j * 1920;
    t.expect(std::equal(w0.begin(), w0.begin() + static_cast<std::ptrdiff_t>(cut), w1.begin()),
             "rendered sample depends on a later frame");
    t.expect(!std::equal(w0.begin() + static_cast<std::ptrdiff_t>(cut), w0.end(), w1.begin() + static_cast<std::ptrdiff_t>(cut)),
             "perturbation had no effect at all");

    // Encoder: samples after token i's last window never change tokens <= i.
    auto wave = detail::random_wave(rng, 25 * audio::kSamplesPerToken);
    auto e0 = audio::default_encoder().encode_offline(wave, 2.0);
    const auto ti = static_cast<std::size_t>(detail::uniform_int(rng, 0, 22));
    const std::size_t from = ti * audio::kSamplesPerToken + 1520;
    for (std::size_t x = from; x < wave.size(); ++x) wave[x] = rng.symmetric(0.9);
    auto e1 = audio::default_encoder().encode_offline(wave, 2.0);
    t.expect(std::equal(e0.data.begin(), e0.data.begin() + static_cast<std::ptrdiff_t>((ti + 1) * e0.dim), e1.data.begin()),
             "encoder token depends on later audio");
  }
  // Mask causality over a sweep grid.
  for (std::size_t n = 1; n <= 40; ++n)
    for (std::size_t w = 1; w <= 45; w += 4) {
      auto m = audio::window_mask_tokens(n, w);
      bool ok = true;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) ok = ok && !m.allowed(i, j);
      t.expect(ok, "mask allows future position");
    }
  return {8, "Causality: talker frames, rendered samples, windowed attention", t.ok(), t.summary(), 0, 60.0};
}

inline std::vector<CriterionResult> run_all(const Options& opt, std::ostream& out) {
  using Fn = CriterionResult (*)(const Options&);
  const Fn criteria[] = {table2_totals, table2_rtf, continuity, tmrope_suite,
                         streaming_equivalence, rate_laws, demo_determinism, causality};
  std::vector<CriterionResult> results;
  for (Fn fn : criteria) {
    auto t0 = std::chrono::steady_clock::now();
    CriterionResult r;
    try {
      r = fn(opt);
    } catch (const std::exception& e) {
      r.id = static_cast<int>(results.size()) + 1;
      r.name = "criterion raised an exception";
      r.budget_s = INFINITY;
      r.passed = false;
      r.detail = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r.seconds > r.budget_s) {
      r.passed = false;
      r.detail += "; over time budget";
    }
    out << (r.passed ? "[PASS] " : "[FAIL] ") << "criterion " << r.id << ": " << r.name << " ("
        << std::setprecision(3) << r.seconds << " s, budget " << r.budget_s << " s) -- " << r.detail << '\n';
    out.flush();
    results.push_back(std::move(r));
  }
  return results;
}

inline bool all_passed(const std::vector<CriterionResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

}  // namespace qomni::acceptance
