// Copyright 2026 The Qomni Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "qomni/core.hpp"

namespace qomni::latency {

/// Logical millisecond clock shared by the simulator and the stream drivers.
class Clock {
 public:
  explicit Clock(double start_ms = 0.0) : now_(start_ms) {}

  double now() const { return now_; }

  void advance(double ms) {
    require(ms >= 0.0, "Clock: cannot move backwards");
    now_ += ms;
  }

  void advance_to(double t) {
    if (t > now_) now_ = t;
  }

 private:
  double now_;
};

}  // namespace qomni::latency
