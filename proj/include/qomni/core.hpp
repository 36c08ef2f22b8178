// Copyright 2026 The Qomni Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qomni {

inline constexpr const char* kVersion = "0.1.0";

/// Raised for inputs that violate an operation's preconditions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(what);
}

using Vec = std::vector<double>;

/// Dense row-major matrix. Only what the toy models need.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
};

inline void matvec(const Matrix& m, std::span<const double> x, std::span<double> y) {
  require(x.size() == m.cols && y.size() == m.rows, "matvec: shape mismatch");
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* w = m.data.data() + r * m.cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) acc += w[c] * x[c];
    y[r] = acc;
  }
}

inline Vec matvec(const Matrix& m, std::span<const double> x) {
  Vec y(m.rows);
  matvec(m, x, y);
  return y;
}

inline void add_inplace(std::span<double> y, std::span<const double> x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline Vec rms_norm(std::span<const double> x, double eps = 1e-6) {
  double ms = dot(x, x) / static_cast<double>(x.size());
  double inv = 1.0 / std::sqrt(ms + eps);
  Vec out(x.begin(), x.end());
  for (double& v : out) v *= inv;
  return out;
}

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(0.7978845608028654 * (x + 0.044715 * x * x * x)));
}

/// Numerically stable softmax in place.
inline void softmax_inplace(std::span<double> x) {
  if (x.empty()) return;
  double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double& v : x) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : x) v /= sum;
}

/// Index of the largest element; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> x) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i)
    if (x[i] > x[best]) best = i;
  return best;
}

inline bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

/// Seeded weight generator. Draws raw 64-bit words from mt19937_64 (whose
/// output sequence is fixed by the standard) and maps them to doubles by hand,
/// so weights are identical on every conforming platform.
class WeightRng {
 public:
  explicit WeightRng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in [-scale, scale).
  double symmetric(double scale) { return (2.0 * uniform() - 1.0) * scale; }

  std::uint64_t next_u64() { return engine_(); }

  Matrix matrix(std::size_t rows, std::size_t cols, double scale) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = symmetric(scale);
    return m;
  }

  /// Fan-in scaled initialisation.
  Matrix dense(std::size_t out, std::size_t in) {
    return matrix(out, in, 1.0 / std::sqrt(static_cast<double>(in)));
  }

  Vec vector(std::size_t n, double scale) {
    Vec v(n);
    for (double& x : v) x = symmetric(scale);
    return v;
  }

 private:
  std::mt19937_64 engine_;
};

/// Mixes a base seed with a per-component tag.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace qomni
