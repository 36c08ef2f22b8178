// Copyright 2026 The Qomni Authors.
// SPDX-License-Identifier: Apache-2.0

// Event-driven model of the streaming critical path:
//
//   preprocess -> thinker prefill/TTFT -> talker prefill/TTFT
//     -> per frame: talker token -> MTP residuals -> codec render
//
// Costs come from a LatencyProfile; concurrency is folded into the profile.
// Times are in milliseconds relative to the end of user input, so the first
// FrameRendered event is the first-packet latency.

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <algorithm>
#include <iterator>
#include <map>
#include <optional>
#include <ostream>
#include <queue>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "qomni/core.hpp"
#include "qomni/latency_clock.hpp"

namespace qomni::latency {

inline constexpr double kFrameMs = 80.0;

enum class ProfileModality { Audio, Video };

inline std::string to_string(ProfileModality m) { return m == ProfileModality::Audio ? "audio" : "video"; }

inline ProfileModality parse_modality(const std::string& s) {
  if (s == "audio") return ProfileModality::Audio;
  if (s == "video") return ProfileModality::Video;
  throw Error("unknown modality '" + s + "' (expected audio or video)");
}

struct LatencyProfile {
  ProfileModality modality = ProfileModality::Audio;
  int concurrency = 1;
  double preproc_ms = 0;
  double thinker_ttft_ms = 0;
  double talker_ttft_ms = 0;
  double mtp_per_token_ms = 0;
  double codec_per_code_ms = 0;
  double thinker_tps = 0;
  double talker_tps = 0;

  void validate() const {
    require(concurrency >= 1, "LatencyProfile: concurrency must be >= 1");
    for (double v : {preproc_ms, thinker_ttft_ms, talker_ttft_ms, mtp_per_token_ms, codec_per_code_ms})
      require(std::isfinite(v) && v > 0.0, "LatencyProfile: stage costs must be positive");
    require(thinker_tps > 0.0 && talker_tps > 0.0, "LatencyProfile: token rates must be positive");
  }
};

/// Sum of the five sequential stages.
inline double first_packet_latency(const LatencyProfile& p) {
  return p.preproc_ms + p.thinker_ttft_ms + p.talker_ttft_ms + p.mtp_per_token_ms + p.codec_per_code_ms;
}

/// Steady-state time per 80 ms frame divided by 80 ms.
inline double per_frame_ms(const LatencyProfile& p) {
  return 1000.0 / p.thinker_tps + 1000.0 / p.talker_tps + p.mtp_per_token_ms + p.codec_per_code_ms;
}

inline double rtf(const LatencyProfile& p) { return per_frame_ms(p) / kFrameMs; }

enum class EventKind { ChunkPrefilled, ThinkerToken, TalkerToken, MtpDone, FrameRendered, PlaybackConsumed };

enum class Stage { None, Preprocess, Thinker, Talker };

inline const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::ChunkPrefilled: return "ChunkPrefilled";
    case EventKind::ThinkerToken: return "ThinkerToken";
    case EventKind::TalkerToken: return "TalkerToken";
    case EventKind::MtpDone: return "MtpDone";
    case EventKind::FrameRendered: return "FrameRendered";
    case EventKind::PlaybackConsumed: return "PlaybackConsumed";
  }
  return "?";
}

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::None: return "";
    case Stage::Preprocess: return "preprocess";
    case Stage::Thinker: return "thinker";
    case Stage::Talker: return "talker";
  }
  return "?";
}

struct StreamEvent {
  double time_ms = 0.0;
  EventKind kind = EventKind::ChunkPrefilled;
  std::int64_t index = 0;  // chunk, token or frame index
  Stage stage = Stage::None;
};

struct Timeline {
  std::vector<StreamEvent> events;
  double first_packet_ms = 0.0;
  double rtf = 0.0;
  int underrun_count = 0;
  std::int64_t frames = 0;
  std::int64_t chunks = 1;
};

struct SimOptions {
  // The utterance reaches the model in this many chunks, `chunk_interval_ms`
  // apart; the last one arrives at t = 0.
  int input_chunks = 1;
  double chunk_interval_ms = 0.0;
};

namespace detail {

class EventLoop {
 public:
  EventLoop(const LatencyProfile& p, std::int64_t n_frames, bool asynchronous, const SimOptions& opt)
      : p_(p), n_frames_(n_frames), async_(asynchronous), chunks_(opt.input_chunks),
        thinker_done_(static_cast<std::size_t>(opt.input_chunks), false),
        preproc_done_(static_cast<std::size_t>(opt.input_chunks), false) {
    for (int c = 0; c < chunks_; ++c)
      schedule(-(chunks_ - 1 - c) * opt.chunk_interval_ms, Action::InputArrived, c);
  }

  Timeline run() {
    while (!queue_.empty()) {
      Pending ev = queue_.top();
      queue_.pop();
      clock_.advance_to(ev.time);
      handle(ev);
    }
    Timeline tl;
    tl.events = std::move(events_);
    tl.first_packet_ms = first_packet_;
    tl.rtf = rtf(p_);
    tl.underrun_count = underruns_;
    tl.frames = n_frames_;
    tl.chunks = chunks_;
    return tl;
  }

 private:
  enum class Action {
    InputArrived, PreprocDone, ThinkerChunkDone, TalkerChunkDone, ThinkerToken, TalkerToken, MtpDone,
    FrameRendered, PlaybackConsume
  };

  struct Pending {
    double time;
    int priority;  // playback drains after production at equal times
    std::uint64_t seq;
    Action action;
    std::int64_t index;
    bool operator>(const Pending& o) const {
      return std::tie(time, priority, seq) > std::tie(o.time, o.priority, o.seq);
    }
  };

  void schedule(double t, Action a, std::int64_t idx) {
    queue_.push({t, a == Action::PlaybackConsume ? 1 : 0, seq_++, a, idx});
  }

  void emit(EventKind k, std::int64_t idx, Stage s = Stage::None) { events_.push_back({clock_.now(), k, idx, s}); }

  bool last_chunk(std::int64_t c) const { return c == chunks_ - 1; }

  void try_start_thinker() {
    if (thinker_busy_ || next_thinker_ >= chunks_) return;
    const auto c = static_cast<std::size_t>(next_thinker_);
    if (!preproc_done_[c]) return;
    // Without overlap the thinker waits until the talker has consumed the previous chunk.
    if (!async_ && next_thinker_ > talker_finished_) return;
    thinker_busy_ = true;
    schedule(clock_.now() + p_.thinker_ttft_ms, Action::ThinkerChunkDone, next_thinker_++);
  }

  void try_start_talker() {
    if (talker_busy_ || next_talker_ >= chunks_) return;
    if (!thinker_done_[static_cast<std::size_t>(next_talker_)]) return;
    talker_busy_ = true;
    schedule(clock_.now() + p_.talker_ttft_ms, Action::TalkerChunkDone, next_talker_++);
  }

  void handle(const Pending& ev) {
    const double now = clock_.now();
    switch (ev.action) {
      case Action::InputArrived:
        // Preprocessing runs per chunk, in arrival order.
        preproc_free_ = std::max(preproc_free_, now) + p_.preproc_ms;
        schedule(preproc_free_, Action::PreprocDone, ev.index);
        break;
      case Action::PreprocDone:
        emit(EventKind::ChunkPrefilled, ev.index, Stage::Preprocess);
        preproc_done_[static_cast<std::size_t>(ev.index)] = true;
        try_start_thinker();
        break;
      case Action::ThinkerChunkDone:
        emit(EventKind::ChunkPrefilled, ev.index, Stage::Thinker);
        thinker_busy_ = false;
        thinker_done_[static_cast<std::size_t>(ev.index)] = true;
        if (last_chunk(ev.index)) emit(EventKind::ThinkerToken, 0);
        try_start_talker();
        try_start_thinker();
        break;
      case Action::TalkerChunkDone:
        emit(EventKind::ChunkPrefilled, ev.index, Stage::Talker);
        talker_busy_ = false;
        talker_finished_ = ev.index + 1;
        if (last_chunk(ev.index)) schedule(now, Action::TalkerToken, 0);
        try_start_talker();
        try_start_thinker();
        break;
      case Action::ThinkerToken:
        emit(EventKind::ThinkerToken, ev.index);
        schedule(now + 1000.0 / p_.talker_tps, Action::TalkerToken, ev.index);
        break;
      case Action::TalkerToken:
        emit(EventKind::TalkerToken, ev.index);
        schedule(now + p_.mtp_per_token_ms, Action::MtpDone, ev.index);
        break;
      case Action::MtpDone:
        emit(EventKind::MtpDone, ev.index);
        schedule(now + p_.codec_per_code_ms, Action::FrameRendered, ev.index);
        break;
      case Action::FrameRendered:
        emit(EventKind::FrameRendered, ev.index);
        ++rendered_;
        if (ev.index == 0) {
          first_packet_ = now;
          for (std::int64_t k = 0; k < n_frames_; ++k)
            schedule(now + kFrameMs * static_cast<double>(k), Action::PlaybackConsume, k);
        }
        if (ev.index + 1 < n_frames_) schedule(now + 1000.0 / p_.thinker_tps, Action::ThinkerToken, ev.index + 1);
        break;
      case Action::PlaybackConsume:
        // The frame due now must already be rendered, else playback stalls.
        if (rendered_ <= ev.index) ++underruns_;
        emit(EventKind::PlaybackConsumed, ev.index);
        break;
    }
  }

  LatencyProfile p_;
  std::int64_t n_frames_;
  bool async_;
  std::int64_t chunks_;
  std::vector<bool> thinker_done_;
  std::vector<bool> preproc_done_;
  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
  Clock clock_{-1e300};
  std::vector<StreamEvent> events_;
  double preproc_free_ = -1e300;
  bool thinker_busy_ = false;
  bool talker_busy_ = false;
  std::int64_t next_thinker_ = 0;
  std::int64_t next_talker_ = 0;
  std::int64_t talker_finished_ = 0;
  std::int64_t rendered_ = 0;
  int underruns_ = 0;
  double first_packet_ = 0.0;
};

}  // namespace detail

/// Simulates one utterance. With `asynchronous`, the talker prefills chunk k
/// while the thinker prefills chunk k + 1; otherwise the two alternate.
inline Timeline simulate_stream(const LatencyProfile& profile, std::int64_t n_frames, bool asynchronous,
                                const SimOptions& options = {}) {
  profile.validate();
  require(n_frames >= 1, "simulate_stream: n_frames must be >= 1");
  require(options.input_chunks >= 1, "simulate_stream: input_chunks must be >= 1");
  require(options.chunk_interval_ms >= 0.0, "simulate_stream: chunk_interval_ms must be >= 0");
  return detail::EventLoop(profile, n_frames, asynchronous, options).run();
}

struct StageBreakdown {
  double preprocessing_ms = 0;
  double thinker_ms = 0;
  double talker_ms = 0;
  double mtp_ms = 0;
  double codec_ms = 0;
  double total_ms = 0;

  double sum() const { return preprocessing_ms + thinker_ms + talker_ms + mtp_ms + codec_ms; }
};

/// Attributes the first packet to the five stages along the tail chunk's
/// path. Any queueing is charged to the stage that was waited on; the parts
/// telescope to first_packet_ms.
inline StageBreakdown critical_path(const Timeline& tl) {
  const std::int64_t tail = tl.chunks - 1;
  auto find = [&](EventKind k, std::int64_t idx, Stage s) {
    for (const auto& e : tl.events)
      if (e.kind == k && e.index == idx && e.stage == s) return e.time_ms;
    throw Error(std::string("critical_path: missing ") + to_string(k) + " event");
  };
  const double pre = find(EventKind::ChunkPrefilled, tail, Stage::Preprocess);
  const double thk = find(EventKind::ChunkPrefilled, tail, Stage::Thinker);
  const double tlk = find(EventKind::TalkerToken, 0, Stage::None);
  const double mtp = find(EventKind::MtpDone, 0, Stage::None);
  const double ren = find(EventKind::FrameRendered, 0, Stage::None);
  StageBreakdown b;
  b.preprocessing_ms = pre;  // input ends at t = 0
  b.thinker_ms = thk - pre;
  b.talker_ms = tlk - thk;
  b.mtp_ms = mtp - tlk;
  b.codec_ms = ren - mtp;
  b.total_ms = ren;
  return b;
}

/// Profile-file entry: a profile plus the totals it is expected to reproduce.
struct ProfileEntry {
  LatencyProfile profile;
  std::optional<double> reported_total_ms;
  std::optional<double> reported_rtf;
};

inline ProfileEntry profile_from_json(const nlohmann::json& j) {
  ProfileEntry e;
  try {
    auto& p = e.profile;
    p.modality = parse_modality(j.at("modality").get<std::string>());
    p.concurrency = j.at("concurrency").get<int>();
    p.preproc_ms = j.at("preproc_ms").get<double>();
    p.thinker_ttft_ms = j.at("thinker_ttft_ms").get<double>();
    p.talker_ttft_ms = j.at("talker_ttft_ms").get<double>();
    p.mtp_per_token_ms = j.at("mtp_per_token_ms").get<double>();
    p.codec_per_code_ms = j.at("codec_per_code_ms").get<double>();
    p.thinker_tps = j.at("thinker_tps").get<double>();
    p.talker_tps = j.at("talker_tps").get<double>();
    if (j.contains("reported_total_ms")) e.reported_total_ms = j["reported_total_ms"].get<double>();
    if (j.contains("reported_rtf")) e.reported_rtf = j["reported_rtf"].get<double>();
  } catch (const nlohmann::json::exception& ex) {
    throw Error(std::string("profile entry: ") + ex.what());
  }
  e.profile.validate();
  return e;
}

class ProfileTable {
 public:
  static ProfileTable parse(const std::string& text) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& ex) {
      throw Error(std::string("profile file: ") + ex.what());
    }
    require(doc.contains("profiles") && doc["profiles"].is_array(), "profile file: missing 'profiles' array");
    ProfileTable t;
    for (const auto& item : doc["profiles"]) {
      ProfileEntry e = profile_from_json(item);
      auto key = std::make_pair(e.profile.modality, e.profile.concurrency);
      require(!t.entries_.count(key), "profile file: duplicate (modality, concurrency) key");
      t.entries_.emplace(key, std::move(e));
    }
    return t;
  }

  static ProfileTable load(const std::string& path) {
    std::ifstream f(path);
    require(static_cast<bool>(f), "cannot open profile file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse(text);
  }

  const ProfileEntry* find(ProfileModality m, int concurrency) const {
    auto it = entries_.find({m, concurrency});
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::vector<const ProfileEntry*> all() const {
    std::vector<const ProfileEntry*> out;
    for (const auto& [k, v] : entries_) out.push_back(&v);
    return out;
  }

 private:
  std::map<std::pair<ProfileModality, int>, ProfileEntry> entries_;
};

/// Builds a profile from measured stage wall times (ms per stage, per token).
struct StageMeasurements {
  double preproc_ms = 0, thinker_ttft_ms = 0, talker_ttft_ms = 0, mtp_ms = 0, codec_ms = 0;
  double thinker_token_ms = 0, talker_token_ms = 0;

  LatencyProfile to_profile(ProfileModality m = ProfileModality::Audio, int concurrency = 1) const {
    auto pos = [](double v) { return std::max(v, 1e-6); };
    LatencyProfile p;
    p.modality = m;
    p.concurrency = concurrency;
    p.preproc_ms = pos(preproc_ms);
    p.thinker_ttft_ms = pos(thinker_ttft_ms);
    p.talker_ttft_ms = pos(talker_ttft_ms);
    p.mtp_per_token_ms = pos(mtp_ms);
    p.codec_per_code_ms = pos(codec_ms);
    p.thinker_tps = 1000.0 / pos(thinker_token_ms);
    p.talker_tps = 1000.0 / pos(talker_token_ms);
    return p;
  }
};

inline void write_breakdown_csv(std::ostream& out, const StageBreakdown& b) {
  out << "stage,ms\n"
      << "preprocessing," << b.preprocessing_ms << '\n'
      << "thinker_ttft," << b.thinker_ms << '\n'
      << "talker_ttft," << b.talker_ms << '\n'
      << "mtp_per_token," << b.mtp_ms << '\n'
      << "codec_per_code," << b.codec_ms << '\n'
      << "first_packet," << b.total_ms << '\n';
}

inline void write_events_csv(std::ostream& out, const Timeline& tl) {
  out << "time_ms,kind,index,stage\n";
  for (const auto& e : tl.events)
    out << e.time_ms << ',' << to_string(e.kind) << ',' << e.index << ',' << to_string(e.stage) << '\n';
}

}  // namespace qomni::latency
