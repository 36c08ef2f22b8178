// Copyright 2026 The Qomni Authors.
// SPDX-License-Identifier: Apache-2.0

// Argument parsing for the `qomni` binary.

#pragma once

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "qomni/acceptance.hpp"
#include "qomni/commands.hpp"

namespace qomni::cli {

inline int run_cli(int argc, const char* const* argv, std::istream& in = std::cin, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"qomni: toy streaming omni-modal inference pipeline and latency model"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Event-driven first-packet latency and RTF report");
  simulate->add_option("--profile", sim.profile_path, "Profile file")->capture_default_str();
  simulate->add_option("--modality", sim.modality, "audio or video")->capture_default_str();
  simulate->add_option("--concurrency", sim.concurrency, "Concurrency level")->capture_default_str();
  simulate->add_option("--n-frames", sim.n_frames, "Frames to generate")->capture_default_str()->check(CLI::PositiveNumber);
  simulate->add_flag("--async", sim.asynchronous, "Overlap talker and thinker chunk prefill");
  simulate->add_option("--input-chunks", sim.input_chunks, "Input chunks per utterance")->check(CLI::PositiveNumber);
  simulate->add_option("--chunk-interval-ms", sim.chunk_interval_ms, "Arrival spacing of input chunks");
  simulate->add_flag("--check", sim.check, "Fail unless reported totals are reproduced");
  simulate->add_option("--out-dir", sim.out_dir, "Write breakdown.csv, events.csv, summary.json here");

  DemoArgs demo;
  auto* demo_cmd = app.add_subcommand("demo", "Run the toy pipeline end to end and write artifacts");
  demo_cmd->add_option("--seed", demo.seed, "Seed for all randomness")->capture_default_str();
  demo_cmd->add_option("--duration-s", demo.duration_s, "Input audio length, multiple of 0.08 s")->capture_default_str();
  demo_cmd->add_option("--window-s", demo.window_s, "Encoder attention window in seconds")->capture_default_str();
  demo_cmd->add_option("--prompt-tokens", demo.prompt_tokens, "Text prompt length")->capture_default_str();
  demo_cmd->add_option("--out-dir", demo.out_dir, "Output directory")->capture_default_str();

  RopeDumpArgs rope;
  auto* rope_cmd = app.add_subcommand("rope-dump", "Assign TM-RoPE positions to a segment list");
  rope_cmd->add_option("--in", rope.input, "Segment list file, '-' for stdin")->capture_default_str();
  rope_cmd->add_option("--out", rope.output, "CSV output, '-' for stdout")->capture_default_str();
  rope_cmd->add_option("--start-id", rope.start_id, "First position ID")->capture_default_str();

  FrontendEncodeArgs fe;
  auto* frontend = app.add_subcommand("frontend", "Audio frontend tools");
  frontend->require_subcommand(1);
  auto* encode = frontend->add_subcommand("encode", "Encode a 16 kHz WAV to 12.5 Hz tokens");
  encode->add_option("--wav", fe.wav, "16 kHz mono 16-bit WAV")->required();
  encode->add_option("--window-s", fe.window_s, "Attention window in seconds")->capture_default_str();
  encode->add_flag("--unsafe-window", fe.unsafe_window, "Allow windows outside [1, 8] s");
  encode->add_option("--out", fe.out, "Token file")->required();

  RenderArgs render;
  auto* render_cmd = app.add_subcommand("render", "Render a frame CSV to a 24 kHz WAV");
  render_cmd->add_option("--frames", render.frames, "frame,cb0,r1,... CSV")->required();
  render_cmd->add_option("--out", render.out, "Output WAV")->required();
  render_cmd->add_option("--seed", render.seed, "Renderer seed offset")->capture_default_str();
  render_cmd->add_option("--vocab", render.vocab, "Codebook size")->capture_default_str();

  acceptance::Options acc;
  auto* check_all = app.add_subcommand("check-all", "Run every acceptance criterion");
  check_all->add_option("--profile", acc.profile_path, "Profile file")->capture_default_str();
  check_all->add_option("--scratch-dir", acc.scratch_dir, "Scratch directory")->capture_default_str();
  check_all->add_option("--seeds", acc.seeds, "Random seeds per stage")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*simulate) return cmd_simulate(sim, out, err);
  if (*demo_cmd) return cmd_demo(demo, out, err);
  if (*rope_cmd) return cmd_rope_dump(rope, in, out, err);
  if (*encode) return cmd_frontend_encode(fe, out, err);
  if (*render_cmd) return cmd_render(render, out, err);
  if (*check_all) {
    auto results = acceptance::run_all(acc, out);
    return acceptance::all_passed(results) ? kExitOk : kExitFailure;
  }
  return kExitUsage;
}

}  // namespace qomni::cli
