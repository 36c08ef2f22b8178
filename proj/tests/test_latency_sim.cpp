// Copyright 2026 The Qomni Authors.
// SPDX-License-Identifier: Apache-2.0

#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "qomni/latency_sim.hpp"

namespace qomni::latency {
namespace {

LatencyProfile make(double pre, double thk, double tlk, double mtp, double codec, double thk_tps, double tlk_tps,
                    ProfileModality m = ProfileModality::Audio, int conc = 1) {
  LatencyProfile p;
  p.modality = m;
  p.concurrency = conc;
  p.preproc_ms = pre;
  p.thinker_ttft_ms = thk;
  p.talker_ttft_ms = tlk;
  p.mtp_per_token_ms = mtp;
  p.codec_per_code_ms = codec;
  p.thinker_tps = thk_tps;
  p.talker_tps = tlk_tps;
  return p;
}

ProfileTable shipped() { return ProfileTable::load(std::string(QOMNI_SOURCE_DIR) + "/profiles/table2.json"); }

LatencyProfile random_profile(std::mt19937_64& rng, bool sub_unity) {
  std::uniform_real_distribution<double> stage(1.0, 500.0);
  for (;;) {
    std::uniform_real_distribution<double> tps(sub_unity ? 30.0 : 5.0, sub_unity ? 400.0 : 40.0);
    std::uniform_real_distribution<double> small(0.1, sub_unity ? 20.0 : 80.0);
    auto p = make(stage(rng), stage(rng), stage(rng), small(rng), small(rng), tps(rng), tps(rng));
    if (sub_unity ? rtf(p) < 1.0 : rtf(p) > 1.0) return p;
  }
}

TEST(FirstPacket, Table2Rows) {
  EXPECT_DOUBLE_EQ(first_packet_latency(make(72, 88, 57, 14, 3, 75, 140)), 234.0);
  EXPECT_DOUBLE_EQ(first_packet_latency(make(160, 160, 210, 14, 3, 75, 140)), 547.0);
  EXPECT_DOUBLE_EQ(first_packet_latency(make(94, 468, 145, 16, 5, 63, 125)), 728.0);
}

TEST(Rtf, Table2Rows) {
  EXPECT_NEAR(rtf(make(1, 1, 1, 14, 3, 75, 140)), 0.468, 5e-4);
  EXPECT_NEAR(rtf(make(1, 1, 1, 16, 5, 63, 125)), 0.561, 5e-4);
  EXPECT_NEAR(rtf(make(1, 1, 1, 14, 3, 75, 140)), 0.47, 0.01);
  EXPECT_NEAR(rtf(make(1, 1, 1, 16, 5, 63, 125)), 0.56, 0.01);
}

TEST(Rtf, FastLimitIsZero) {
  EXPECT_NEAR(rtf(make(1, 1, 1, 0, 0, 1e15, 1e15)), 0.0, 1e-12);
}

TEST(Profiles, ShippedTableReproducesReportedTotals) {
  auto table = shipped();
  auto all = table.all();
  ASSERT_EQ(all.size(), 6u);
  for (const auto* e : all) {
    auto tl = simulate_stream(e->profile, 1, false);
    ASSERT_TRUE(e->reported_total_ms && e->reported_rtf);
    EXPECT_NEAR(tl.first_packet_ms, *e->reported_total_ms, 5.0);
    EXPECT_NEAR(tl.rtf, *e->reported_rtf, 0.03);
    EXPECT_DOUBLE_EQ(tl.first_packet_ms, first_packet_latency(e->profile));
  }
  EXPECT_EQ(table.find(ProfileModality::Audio, 3), nullptr);
  ASSERT_NE(table.find(ProfileModality::Video, 6), nullptr);
  EXPECT_DOUBLE_EQ(first_packet_latency(table.find(ProfileModality::Video, 6)->profile), 2287.0);
}

TEST(Profiles, CriticalPathReproducesRows) {
  auto table = shipped();
  for (const auto* e : table.all()) {
    auto b = critical_path(simulate_stream(e->profile, 1, false));
    EXPECT_DOUBLE_EQ(b.preprocessing_ms, e->profile.preproc_ms);
    EXPECT_DOUBLE_EQ(b.thinker_ms, e->profile.thinker_ttft_ms);
    EXPECT_DOUBLE_EQ(b.talker_ms, e->profile.talker_ttft_ms);
    EXPECT_DOUBLE_EQ(b.mtp_ms, e->profile.mtp_per_token_ms);
    EXPECT_DOUBLE_EQ(b.codec_ms, e->profile.codec_per_code_ms);
    EXPECT_DOUBLE_EQ(b.sum(), b.total_ms);
  }
}

TEST(Profiles, ParseErrors) {
  EXPECT_THROW(ProfileTable::parse("not json"), Error);
  EXPECT_THROW(ProfileTable::parse("{}"), Error);
  EXPECT_THROW(ProfileTable::parse(R"({"profiles":[{"modality":"audio"}]})"), Error);
  const std::string row = R"({"modality":"audio","concurrency":1,"preproc_ms":1,"thinker_ttft_ms":1,
    "talker_ttft_ms":1,"mtp_per_token_ms":1,"codec_per_code_ms":1,"thinker_tps":1,"talker_tps":1})";
  EXPECT_NO_THROW(ProfileTable::parse(R"({"profiles":[)" + row + "]}"));
  EXPECT_THROW(ProfileTable::parse(R"({"profiles":[)" + row + "," + row + "]}"), Error);
  EXPECT_THROW(ProfileTable::load("/nonexistent/profile.json"), Error);
  EXPECT_THROW(parse_modality("smell"), Error);
}

TEST(Simulate, Continuity) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    auto p = random_profile(rng, true);
    std::int64_t n = 1 + std::int64_t(rng() % 300);
    EXPECT_EQ(simulate_stream(p, n, bool(rng() & 1)).underrun_count, 0) << "rtf " << rtf(p);
  }
  auto audio = make(72, 88, 57, 14, 3, 75, 140);
  EXPECT_EQ(simulate_stream(audio, 100, false).underrun_count, 0);
}

TEST(Simulate, SlowProfilesUnderrun) {
  auto slow = make(72, 88, 57, 50, 50, 10, 10);
  ASSERT_GT(rtf(slow), 1.0);
  EXPECT_GT(simulate_stream(slow, 20, false).underrun_count, 0);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) EXPECT_GT(simulate_stream(random_profile(rng, false), 50, false).underrun_count, 0);
}

TEST(Simulate, Monotonicity) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> bump(0.0, 100.0);
  for (int i = 0; i < 200; ++i) {
    auto p = random_profile(rng, true);
    SimOptions opt{1 + int(rng() % 4), double(rng() % 300)};
    bool async = rng() & 1;
    double base = simulate_stream(p, 3, async, opt).first_packet_ms;
    auto q = p;
    double* fields[] = {&q.preproc_ms, &q.thinker_ttft_ms, &q.talker_ttft_ms, &q.mtp_per_token_ms,
                        &q.codec_per_code_ms};
    *fields[rng() % 5] += bump(rng);
    EXPECT_GE(simulate_stream(q, 3, async, opt).first_packet_ms, base);
  }
}

TEST(Simulate, EventOrder) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    auto p = random_profile(rng, bool(rng() & 1));
    auto tl = simulate_stream(p, 20, bool(rng() & 1), {1 + int(rng() % 5), double(rng() % 200)});
    for (std::size_t k = 1; k < tl.events.size(); ++k) ASSERT_LE(tl.events[k - 1].time_ms, tl.events[k].time_ms);
    std::vector<double> talker(20, -1), mtp(20, -1), render(20, -1);
    for (const auto& e : tl.events) {
      if (e.kind == EventKind::TalkerToken) talker[std::size_t(e.index)] = e.time_ms;
      if (e.kind == EventKind::MtpDone) mtp[std::size_t(e.index)] = e.time_ms;
      if (e.kind == EventKind::FrameRendered) render[std::size_t(e.index)] = e.time_ms;
    }
    for (std::size_t f = 0; f < 20; ++f) {
      ASSERT_GE(talker[f], 0.0);
      ASSERT_LT(talker[f], mtp[f]);
      ASSERT_LT(mtp[f], render[f]);
    }
    auto b = critical_path(tl);
    ASSERT_NEAR(b.sum(), tl.first_packet_ms, 1e-9);
  }
}

TEST(Simulate, AsyncOverlapHelpsBackToBackChunks) {
  // Three chunks arriving together: with overlap the talker prefills chunk k
  // while the thinker works on k + 1.
  auto p = make(10, 100, 80, 14, 3, 75, 140);
  SimOptions opt{3, 0.0};
  double sync = simulate_stream(p, 1, false, opt).first_packet_ms;
  double async = simulate_stream(p, 1, true, opt).first_packet_ms;
  // Chunk 0 leaves preprocessing at 10 ms; the other two are ready before the thinker is.
  EXPECT_DOUBLE_EQ(sync, 10.0 + (100.0 + 80.0) * 3 + 17.0);
  EXPECT_DOUBLE_EQ(async, 10.0 + 100.0 * 3 + 80.0 + 17.0);
}

TEST(Simulate, SpacedChunksReduceToSingleUtterance) {
  // Chunks spaced wider than the prefill work leave only the tail chunk on the critical path.
  auto p = make(72, 88, 57, 14, 3, 75, 140);
  for (bool async : {false, true}) {
    auto tl = simulate_stream(p, 5, async, {4, 1000.0});
    EXPECT_DOUBLE_EQ(tl.first_packet_ms, 234.0);
  }
}

TEST(Simulate, PlaybackStartsAtFirstPacket) {
  auto p = make(72, 88, 57, 14, 3, 75, 140);
  auto tl = simulate_stream(p, 4, false);
  std::vector<double> consumed;
  for (const auto& e : tl.events)
    if (e.kind == EventKind::PlaybackConsumed) consumed.push_back(e.time_ms);
  ASSERT_EQ(consumed.size(), 4u);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(consumed[k], 234.0 + 80.0 * double(k));
}

TEST(Simulate, Rejects) {
  auto p = make(72, 88, 57, 14, 3, 75, 140);
  EXPECT_THROW(simulate_stream(p, 0, false), Error);
  EXPECT_THROW(simulate_stream(p, 1, false, {0, 0.0}), Error);
  EXPECT_THROW(simulate_stream(p, 1, false, {2, -1.0}), Error);
  p.talker_tps = 0;
  EXPECT_THROW(simulate_stream(p, 1, false), Error);
}

TEST(Reports, CsvLayouts) {
  auto tl = simulate_stream(make(72, 88, 57, 14, 3, 75, 140), 1, false);
  std::ostringstream b, e;
  write_breakdown_csv(b, critical_path(tl));
  EXPECT_EQ(b.str(),
            "stage,ms\npreprocessing,72\nthinker_ttft,88\ntalker_ttft,57\nmtp_per_token,14\ncodec_per_code,3\n"
            "first_packet,234\n");
  write_events_csv(e, tl);
  EXPECT_EQ(e.str().rfind("time_ms,kind,index,stage\n72,ChunkPrefilled,0,preprocess\n", 0), 0u);
}

TEST(Measurements, ToProfile) {
  StageMeasurements m{1, 2, 3, 4, 5, 10, 20};
  auto p = m.to_profile();
  EXPECT_DOUBLE_EQ(first_packet_latency(p), 15.0);
  EXPECT_DOUBLE_EQ(p.thinker_tps, 100.0);
  EXPECT_DOUBLE_EQ(p.talker_tps, 50.0);
}

}  // namespace
}  // namespace qomni::latency
