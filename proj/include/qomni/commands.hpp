// Copyright 2026 The Qomni Authors.
// SPDX-License-Identifier: Apache-2.0

// Subcommand implementations behind the `qomni` binary. Each returns a
// process exit code: 0 success, 1 assertion or tolerance failure, 2 usage or
// configuration error.

#pragma once

#include <bit>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "qomni/audio_frontend.hpp"
#include "qomni/code2wav.hpp"
#include "qomni/core.hpp"
#include "qomni/latency_sim.hpp"
#include "qomni/moe_core.hpp"
#include "qomni/talker_stream.hpp"
#include "qomni/tmrope.hpp"
#include "qomni/tmrope_io.hpp"
#include "qomni/wav.hpp"

namespace qomni::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline constexpr double kTotalToleranceMs = 5.0;
inline constexpr double kRtfTolerance = 0.03;
inline constexpr double kStreamTolerance = 1e-6;

/// Raised when a streaming path disagrees with its offline reference.
class BoundaryMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything needed to reproduce an output file.
struct RunManifest {
  std::string subcommand;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> outputs;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["tool"] = "qomni";
    j["version"] = kVersion;
    j["subcommand"] = subcommand;
    j["seed"] = seed;
    j["config"] = config;
    j["outputs"] = outputs;
    return j;
  }
};

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), "cannot open '" + path.string() + "' for writing");
  f << text;
}

inline void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  write_text(path, m.to_json().dump(2) + "\n");
}

inline std::string fmt_num(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

}  // namespace detail

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string profile_path = "profiles/table2.json";
  std::string modality = "audio";
  int concurrency = 1;
  std::int64_t n_frames = 1;
  bool asynchronous = false;
  int input_chunks = 1;
  double chunk_interval_ms = 0.0;
  bool check = false;
  std::string out_dir;  // empty: stdout only
};

inline int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err) {
  using namespace latency;
  const ProfileEntry* entry = nullptr;
  ProfileTable table;
  Timeline tl;
  try {
    table = ProfileTable::load(args.profile_path);
    entry = table.find(parse_modality(args.modality), args.concurrency);
    if (!entry) {
      err << "error: profile key not found: (" << args.modality << ", " << args.concurrency << ")\n";
      return kExitUsage;
    }
    tl = simulate_stream(entry->profile, args.n_frames, args.asynchronous,
                         SimOptions{args.input_chunks, args.chunk_interval_ms});
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  const StageBreakdown b = critical_path(tl);
  const double formula = first_packet_latency(entry->profile);

  out << "modality=" << args.modality << '\n'
      << "concurrency=" << args.concurrency << '\n'
      << "n_frames=" << args.n_frames << '\n'
      << "asynchronous=" << (args.asynchronous ? "true" : "false") << '\n'
      << "preprocessing_ms=" << detail::fmt_num(b.preprocessing_ms) << '\n'
      << "thinker_ttft_ms=" << detail::fmt_num(b.thinker_ms) << '\n'
      << "talker_ttft_ms=" << detail::fmt_num(b.talker_ms) << '\n'
      << "mtp_per_token_ms=" << detail::fmt_num(b.mtp_ms) << '\n'
      << "codec_per_code_ms=" << detail::fmt_num(b.codec_ms) << '\n'
      << "first_packet_ms=" << detail::fmt_num(tl.first_packet_ms) << '\n'
      << "rtf=" << detail::fmt_num(tl.rtf) << '\n'
      << "underrun_count=" << tl.underrun_count << '\n';

  bool ok = true;
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  if (args.check) {
    if (!entry->reported_total_ms || !entry->reported_rtf) {
      err << "error: --check needs reported_total_ms and reported_rtf in the profile entry\n";
      return kExitUsage;
    }
    auto check = [&](const char* name, double got, double want, double tol) {
      double delta = got - want;
      bool pass = std::abs(delta) <= tol;
      ok = ok && pass;
      out << "check " << name << ": " << detail::fmt_num(got) << " vs reported " << detail::fmt_num(want)
          << " (delta " << detail::fmt_num(delta) << ", tol " << detail::fmt_num(tol) << ") "
          << (pass ? "PASS" : "FAIL") << '\n';
      checks.push_back({{"name", name}, {"value", got}, {"reported", want}, {"delta", delta},
                        {"tolerance", tol}, {"pass", pass}});
    };
    check("first_packet_ms", tl.first_packet_ms, *entry->reported_total_ms, kTotalToleranceMs);
    check("rtf", tl.rtf, *entry->reported_rtf, kRtfTolerance);
    if (formula != *entry->reported_total_ms)
      out << "note: stage sum " << detail::fmt_num(formula) << " differs from the reported total "
          << detail::fmt_num(*entry->reported_total_ms) << '\n';
  }

  if (!args.out_dir.empty()) {
    try {
      namespace fs = std::filesystem;
      fs::create_directories(args.out_dir);
      RunManifest m;
      m.subcommand = "simulate";
      m.config = {{"profile", args.profile_path}, {"modality", args.modality},
                  {"concurrency", args.concurrency}, {"n_frames", args.n_frames},
                  {"asynchronous", args.asynchronous}, {"input_chunks", args.input_chunks},
                  {"chunk_interval_ms", args.chunk_interval_ms}, {"check", args.check}};
      m.outputs = {"breakdown.csv", "events.csv", "summary.json"};
      std::ostringstream csv;
      write_breakdown_csv(csv, b);
      detail::write_text(fs::path(args.out_dir) / "breakdown.csv", csv.str());
      std::ostringstream ev;
      write_events_csv(ev, tl);
      detail::write_text(fs::path(args.out_dir) / "events.csv", ev.str());
      nlohmann::ordered_json summary;
      summary["manifest"] = m.to_json();
      summary["breakdown"] = {{"preprocessing_ms", b.preprocessing_ms}, {"thinker_ttft_ms", b.thinker_ms},
                              {"talker_ttft_ms", b.talker_ms},          {"mtp_per_token_ms", b.mtp_ms},
                              {"codec_per_code_ms", b.codec_ms}};
      summary["first_packet_ms"] = tl.first_packet_ms;
      summary["rtf"] = tl.rtf;
      summary["underrun_count"] = tl.underrun_count;
      if (args.check) summary["checks"] = checks;
      detail::write_text(fs::path(args.out_dir) / "summary.json", summary.dump(2) + "\n");
      detail::write_manifest(fs::path(args.out_dir) / "manifest.json", m);
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kExitUsage;
    }
  }
  return ok ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- rope-dump

struct RopeDumpArgs {
  std::string input = "-";
  std::string output = "-";
  std::int64_t start_id = 0;
};

inline int cmd_rope_dump(const RopeDumpArgs& args, std::istream& in, std::ostream& out, std::ostream& err) {
  try {
    std::vector<tmrope::ModalitySegment> segs;
    if (args.input == "-") {
      segs = tmrope::parse_segments(in);
    } else {
      std::ifstream f(args.input);
      require(static_cast<bool>(f), "cannot open '" + args.input + "'");
      segs = tmrope::parse_segments(f);
    }
    auto triples = tmrope::assign_positions(segs, args.start_id);
    std::ostringstream csv;
    tmrope::write_triples_csv(csv, triples);
    if (args.output == "-") {
      out << csv.str();
    } else {
      detail::write_text(args.output, csv.str());
      RunManifest m;
      m.subcommand = "rope-dump";
      m.config = {{"input", args.input}, {"start_id", args.start_id}};
      m.outputs = {args.output};
      detail::write_manifest(args.output + ".manifest.json", m);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- frontend

struct FrontendEncodeArgs {
  std::string wav;
  double window_s = 4.0;
  bool unsafe_window = false;
  std::string out;
};

/// Little-endian: uint32 N, uint32 d, then N*d float32 row-major.
inline std::vector<char> encode_token_file(const audio::EncoderTokenBlock& block) {
  std::vector<char> bytes;
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  put32(static_cast<std::uint32_t>(block.tokens));
  put32(static_cast<std::uint32_t>(block.dim));
  for (double v : block.data) put32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return bytes;
}

inline int cmd_frontend_encode(const FrontendEncodeArgs& args, std::ostream& out, std::ostream& err) {
  try {
    wav::PcmAudio pcm = wav::read_file(args.wav);
    require(pcm.sample_rate_hz == audio::kSampleRateHz, "input WAV must be 16 kHz mono 16-bit PCM");
    auto block = audio::default_encoder().encode_offline(pcm.samples, args.window_s, args.unsafe_window);
    auto bytes = encode_token_file(block);
    std::ofstream f(args.out, std::ios::binary);
    require(static_cast<bool>(f), "cannot open '" + args.out + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    RunManifest m;
    m.subcommand = "frontend encode";
    m.seed = audio::kEncoderSeed;
    m.config = {{"wav", args.wav}, {"window_s", args.window_s}, {"unsafe_window", args.unsafe_window}};
    m.outputs = {args.out};
    detail::write_manifest(args.out + ".manifest.json", m);
    out << "tokens=" << block.tokens << " dim=" << block.dim << '\n';
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- render

struct RenderArgs {
  std::string frames;
  std::string out;
  std::uint64_t seed = 0;  // offsets the fixed renderer seed; 0 matches `demo`
  int vocab = 256;
};

inline int cmd_render(const RenderArgs& args, std::ostream& out, std::ostream& err) {
  try {
    std::ifstream f(args.frames);
    require(static_cast<bool>(f), "cannot open '" + args.frames + "'");
    auto frames = code2wav::read_frames_csv(f);
    require(!frames.empty(), "frames CSV has no frames");
    code2wav::RendererConfig cfg;
    cfg.codebooks = frames.front().codebooks();
    cfg.vocab = args.vocab;
    cfg.seed = code2wav::kRendererSeed + args.seed;
    code2wav::Renderer renderer(cfg);
    code2wav::RenderState state;
    wav::PcmAudio pcm{cfg.sample_rate_hz, {}};
    for (const auto& fr : frames) {
      auto s = code2wav::decode_frame(renderer, fr, state);
      pcm.samples.insert(pcm.samples.end(), s.begin(), s.end());
    }
    wav::write_file(args.out, pcm);
    RunManifest m;
    m.subcommand = "render";
    m.seed = args.seed;
    m.config = {{"frames", args.frames}, {"vocab", args.vocab}, {"codebooks", cfg.codebooks},
                {"sample_rate_hz", cfg.sample_rate_hz}, {"receptive_frames", cfg.receptive_frames}};
    m.outputs = {args.out};
    detail::write_manifest(args.out + ".manifest.json", m);
    out << "frames=" << frames.size() << " samples=" << pcm.samples.size() << " sample_rate_hz=" << cfg.sample_rate_hz
        << '\n';
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- demo

struct DemoArgs {
  std::uint64_t seed = 0;
  double duration_s = 2.0;
  double window_s = 4.0;
  int prompt_tokens = 4;
  std::string out_dir = ".";
};

struct DemoResult {
  std::size_t encoder_tokens = 0;
  std::size_t frames = 0;
  std::size_t samples = 0;
  std::vector<talker::CodecFrame> codec_frames;
  std::vector<double> waveform;
};

/// Deterministic test signal: three seeded partials plus a little noise.
inline std::vector<double> demo_waveform(std::uint64_t seed, std::size_t n) {
  WeightRng rng(derive_seed(seed, 0x3A7E));
  double freq[3], amp[3], phase[3];
  for (int i = 0; i < 3; ++i) {
    freq[i] = 100.0 + 2900.0 * rng.uniform();
    amp[i] = 0.1 + 0.2 * rng.uniform();
    phase[i] = 6.283185307179586 * rng.uniform();
  }
  std::vector<double> w(n);
  for (std::size_t s = 0; s < n; ++s) {
    double t = static_cast<double>(s) / audio::kSampleRateHz;
    double v = 0.01 * rng.symmetric(1.0);
    for (int i = 0; i < 3; ++i) v += amp[i] * std::sin(6.283185307179586 * freq[i] * t + phase[i]);
    w[s] = v;
  }
  return w;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// frontend -> positions -> thinker prefill -> talker -> renderer, checking
/// each streaming stage against its offline reference.
inline DemoResult run_demo_pipeline(const DemoArgs& args, std::vector<tmrope::PositionTriple>* positions = nullptr) {
  const long duration_ms = std::lround(args.duration_s * 1000.0);
  require(args.duration_s > 0.0 && std::abs(args.duration_s * 1000.0 - static_cast<double>(duration_ms)) < 1e-6 &&
              duration_ms % 80 == 0,
          "duration must be a positive multiple of 80 ms");
  require(args.prompt_tokens >= 1, "prompt_tokens must be >= 1");
  DemoResult r;

  // Frontend.
  const auto n_samples = static_cast<std::size_t>(duration_ms) * (audio::kSampleRateHz / 1000);
  const auto wave = demo_waveform(args.seed, n_samples);
  const auto& encoder = audio::default_encoder();
  const auto offline_tokens = encoder.encode_offline(wave, args.window_s);
  std::vector<std::vector<double>> chunks;
  {
    WeightRng rng(derive_seed(args.seed, 0xC4A7));
    std::size_t pos = 0;
    while (pos < n_samples) {
      std::size_t units = 1 + static_cast<std::size_t>(rng.uniform() * 4.0);
      std::size_t len = std::min(units * audio::kChunkGranularity, n_samples - pos);
      chunks.emplace_back(wave.begin() + static_cast<std::ptrdiff_t>(pos),
                          wave.begin() + static_cast<std::ptrdiff_t>(pos + len));
      pos += len;
    }
  }
  const auto stream_tokens = audio::encode_streaming(encoder, chunks, args.window_s);
  if (stream_tokens.tokens != offline_tokens.tokens ||
      max_abs_diff(stream_tokens.data, offline_tokens.data) > kStreamTolerance)
    throw BoundaryMismatch("boundary audio_frontend: streaming encoder differs from offline");
  r.encoder_tokens = offline_tokens.tokens;

  // Positions: a text prompt followed by the audio segment.
  std::vector<tmrope::ModalitySegment> segs{tmrope::ModalitySegment::text(args.prompt_tokens),
                                            tmrope::ModalitySegment::audio(duration_ms)};
  auto triples = tmrope::assign_positions(segs);
  if (triples.size() != static_cast<std::size_t>(args.prompt_tokens) + offline_tokens.tokens)
    throw BoundaryMismatch("boundary tmrope: position count differs from token count");
  if (positions) *positions = triples;

  // Thinker prefill.
  moe::MoEConfig thinker_cfg;
  thinker_cfg.seed = derive_seed(args.seed, 1);
  moe::MoeModel thinker(thinker_cfg);
  WeightRng rng(derive_seed(args.seed, 0xADA));
  std::vector<int> prompt;
  for (int i = 0; i < args.prompt_tokens; ++i)
    prompt.push_back(static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(thinker_cfg.vocab)));
  Matrix adapter = rng.dense(static_cast<std::size_t>(thinker_cfg.d_model), encoder.dim());
  std::vector<Vec> inputs = thinker.embed(prompt);
  for (std::size_t i = 0; i < offline_tokens.tokens; ++i) inputs.push_back(matvec(adapter, offline_tokens.row(i)));
  auto chunked = moe::prefill_chunked(thinker, inputs, triples, 5);
  auto offline = moe::prefill_offline(thinker, inputs, triples);
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (max_abs_diff(chunked.hidden[i], offline.hidden[i]) > kStreamTolerance)
      throw BoundaryMismatch("boundary moe_core: chunked prefill differs from offline");

  // Talker, fed only with the audio-position features.
  std::vector<Vec> context(offline.hidden.begin() + args.prompt_tokens, offline.hidden.end());
  talker::TalkerConfig talker_cfg;
  talker_cfg.seed = derive_seed(args.seed, 2);
  talker_cfg.context_dim = thinker_cfg.d_model;
  talker::Talker tk(talker_cfg);
  const int n_frames = static_cast<int>(context.size());
  auto reference_frames = talker::generate_offline(tk, {}, context, n_frames);

  // Renderer consumes frames on its own thread through a bounded queue.
  code2wav::RendererConfig rcfg;
  rcfg.codebooks = talker_cfg.codebooks;
  rcfg.vocab = talker_cfg.vocab;
  code2wav::Renderer renderer(rcfg);
  talker::BoundedQueue<talker::CodecFrame> queue(2);
  std::vector<talker::CodecFrame> consumed;
  std::vector<double> streamed;
  std::exception_ptr consumer_error;
  std::thread consumer([&] {
    try {
      code2wav::RenderState state;
      while (auto f = queue.pop()) {
        auto s = code2wav::decode_frame(renderer, *f, state);
        streamed.insert(streamed.end(), s.begin(), s.end());
        consumed.push_back(std::move(*f));
      }
    } catch (...) {
      consumer_error = std::current_exception();
    }
  });
  latency::Clock clock;
  try {
    talker::generate_stream(tk, {}, context, n_frames,
                            [&](const talker::Emission& e) {
                              queue.push(e.frame);
                              return 0.0;
                            },
                            clock);
  } catch (...) {
    queue.close();
    consumer.join();
    throw;
  }
  queue.close();
  consumer.join();
  if (consumer_error) std::rethrow_exception(consumer_error);

  if (consumed != reference_frames)
    throw BoundaryMismatch("boundary talker_stream: streamed frames differ from offline loop");
  auto offline_wave = code2wav::decode_offline(renderer, reference_frames);
  if (max_abs_diff(streamed, offline_wave) > kStreamTolerance)
    throw BoundaryMismatch("boundary code2wav: streaming render differs from offline");

  r.frames = consumed.size();
  r.samples = streamed.size();
  r.codec_frames = std::move(consumed);
  r.waveform = std::move(streamed);
  return r;
}

inline int cmd_demo(const DemoArgs& args, std::ostream& out, std::ostream& err) {
  namespace fs = std::filesystem;
  DemoResult r;
  std::vector<tmrope::PositionTriple> positions;
  try {
    r = run_demo_pipeline(args, &positions);
  } catch (const BoundaryMismatch& e) {
    err << "assertion failed: " << e.what() << '\n';
    return kExitFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  try {
    fs::create_directories(args.out_dir);
    const fs::path dir(args.out_dir);
    wav::write_file((dir / "demo.wav").string(), wav::PcmAudio{24000, r.waveform});
    std::ostringstream frames_csv;
    talker::write_frames_csv(frames_csv, r.codec_frames);
    detail::write_text(dir / "frames.csv", frames_csv.str());
    std::ostringstream pos_csv;
    tmrope::write_triples_csv(pos_csv, positions);
    detail::write_text(dir / "positions.csv", pos_csv.str());
    RunManifest m;
    m.subcommand = "demo";
    m.seed = args.seed;
    m.config = {{"duration_s", args.duration_s}, {"window_s", args.window_s}, {"prompt_tokens", args.prompt_tokens},
                {"encoder_seed", audio::kEncoderSeed}, {"renderer_seed", code2wav::kRendererSeed}};
    m.outputs = {"demo.wav", "frames.csv", "positions.csv"};
    detail::write_manifest(dir / "manifest.json", m);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  out << "encoder_tokens=" << r.encoder_tokens << '\n'
      << "frames=" << r.frames << '\n'
      << "samples=" << r.samples << '\n'
      << "sample_rate_hz=24000\n"
      << "streaming_equals_offline=true\n";
  return kExitOk;
}

}  // namespace qomni::cli
