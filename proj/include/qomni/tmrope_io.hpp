// Copyright 2026 The Qomni Authors.
// SPDX-License-Identifier: Apache-2.0

// Text segment lists for `rope-dump`:
//
//   text N
//   audio MS
//   image RxC
//   video T1,T2,... RxC
//   audiovisual MS T1,T2,... RxC
//
// Blank lines and lines starting with '#' are ignored.

#pragma once

#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "qomni/tmrope.hpp"

namespace qomni::tmrope {

namespace detail {

inline std::int64_t parse_int(const std::string& s, int line_no) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == s.size() && !s.empty(), "line " + std::to_string(line_no) + ": bad integer '" + s + "'");
  return v;
}

inline std::pair<std::int64_t, std::int64_t> parse_grid(const std::string& s, int line_no) {
  auto x = s.find('x');
  require(x != std::string::npos, "line " + std::to_string(line_no) + ": expected RxC, got '" + s + "'");
  return {parse_int(s.substr(0, x), line_no), parse_int(s.substr(x + 1), line_no)};
}

inline std::vector<VideoFrame> parse_frames(const std::string& stamps, const std::string& grid, int line_no) {
  auto [rows, cols] = parse_grid(grid, line_no);
  std::vector<VideoFrame> frames;
  std::stringstream ss(stamps);
  std::string item;
  while (std::getline(ss, item, ',')) frames.push_back({parse_int(item, line_no), rows, cols});
  return frames;
}

}  // namespace detail

inline std::vector<ModalitySegment> parse_segments(std::istream& in) {
  std::vector<ModalitySegment> segs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::stringstream ss(line);
    std::vector<std::string> words;
    for (std::string w; ss >> w;) words.push_back(w);
    if (words.empty() || words[0][0] == '#') continue;

    const std::string& kind = words[0];
    auto expect = [&](std::size_t n) {
      require(words.size() == n, "line " + std::to_string(line_no) + ": '" + kind + "' expects " +
                                     std::to_string(n - 1) + " argument(s)");
    };
    if (kind == "text") {
      expect(2);
      segs.push_back(ModalitySegment::text(detail::parse_int(words[1], line_no)));
    } else if (kind == "audio") {
      expect(2);
      segs.push_back(ModalitySegment::audio(detail::parse_int(words[1], line_no)));
    } else if (kind == "image") {
      expect(2);
      auto [r, c] = detail::parse_grid(words[1], line_no);
      segs.push_back(ModalitySegment::image(r, c));
    } else if (kind == "video") {
      expect(3);
      segs.push_back(ModalitySegment::video(detail::parse_frames(words[1], words[2], line_no)));
    } else if (kind == "audiovisual") {
      expect(4);
      segs.push_back(ModalitySegment::audiovisual(
          ModalitySegment::audio(detail::parse_int(words[1], line_no)),
          ModalitySegment::video(detail::parse_frames(words[2], words[3], line_no))));
    } else {
      throw Error("line " + std::to_string(line_no) + ": unknown segment kind '" + kind + "'");
    }
  }
  return segs;
}

inline void write_triples_csv(std::ostream& out, std::span<const PositionTriple> triples) {
  out << "index,t,h,w\n";
  for (std::size_t i = 0; i < triples.size(); ++i)
    out << i << ',' << triples[i].t << ',' << triples[i].h << ',' << triples[i].w << '\n';
}

}  // namespace qomni::tmrope
