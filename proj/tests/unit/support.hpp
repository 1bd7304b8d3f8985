// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "svcd/numerics.hpp"
#include "svcd/rng.hpp"

namespace svcd::test {

inline Vector random_vector(SplitMix64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  Vector v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline Matrix random_matrix(SplitMix64& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& x : m.data()) x = rng.uniform(-1.0, 1.0);
  return m;
}

// Softmax evaluated in long double, written out longhand.
inline std::vector<long double> softmax_ld(const std::vector<double>& x) {
  long double peak = x[0];
  for (double v : x) peak = std::max<long double>(peak, v);
  std::vector<long double> e(x.size());
  long double z = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(static_cast<long double>(x[i]) - peak);
    z += e[i];
  }
  for (auto& v : e) v /= z;
  return e;
}

}  // namespace svcd::test
