// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <utility>

#include "support.hpp"
#include "svcd/errors.hpp"
#include "svcd/sac.hpp"
#include "svcd/sparse_attention.hpp"

using namespace svcd;

TEST_SUITE("sac") {
  TEST_CASE("penalty weights") {
    const auto u = sac::penalty_weights(Vector{2, 2, 2, 2}, 0.1);
    for (double w : u.w) CHECK(w == doctest::Approx(0.25).epsilon(1e-15));
    const auto sink = sac::penalty_weights(Vector{9, 1, 1, 0.5}, 0.1);
    for (std::size_t j = 1; j < 4; ++j) CHECK(sink.w[0] > sink.w[j]);
    const auto w = sac::penalty_weights(Vector{3, 1, 0}, 0.1);
    const auto ref = test::softmax_ld({3, 1, 0});
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::fabs(w.w[j] - static_cast<double>(ref[j])) <= 1e-12);
    CHECK_THROWS_AS(sac::penalty_weights(Vector{}, 0.1), ContractViolation);
  }

  TEST_CASE("zero strength leaves scores untouched") {
    SplitMix64 rng(31);
    for (int trial = 0; trial < 200; ++trial) {
      const Vector s = test::random_vector(rng, 10, -10.0, 10.0);
      const auto w = sac::penalty_weights(test::random_vector(rng, 10, 0.0, 5.0), 0.0);
      CHECK(sac::calibrate_scores(s, w) == s);
    }
  }

  TEST_CASE("a single token is unaffected") {
    const auto w = sac::penalty_weights(Vector{4.0}, 0.3);
    CHECK(w.w == Vector{1.0});
    CHECK(sac::calibrate_scores(Vector{1.7}, w)[0] == doctest::Approx(1.7).epsilon(1e-15));
  }

  TEST_CASE("default strength") { CHECK(SparsifyConfig{}.beta == 0.1); }

  TEST_CASE("larger weight means a smaller calibrated score") {
    SplitMix64 rng(32);
    for (int trial = 0; trial < 1000; ++trial) {
      const double s = rng.uniform(1e-3, 10.0);
      const double beta = rng.uniform(1e-3, 1.0);
      double w1 = rng.uniform(0.0, 1.0), w2 = rng.uniform(0.0, 1.0);
      if (w1 == w2) continue;
      if (w1 > w2) std::swap(w1, w2);
      CHECK(sac::calibrate_score(s, w2, beta) < sac::calibrate_score(s, w1, beta));
    }
  }

  TEST_CASE("calibrated rows remain distributions") {
    SplitMix64 rng(33);
    for (int trial = 0; trial < 200; ++trial) {
      const auto w = sac::penalty_weights(test::random_vector(rng, 12, 0.0, 8.0), rng.uniform(0.0, 1.0));
      CHECK(std::fabs(sum(w.w) - 1.0) <= 1e-9);
      const Vector p = stable_softmax(sac::calibrate_scores(test::random_vector(rng, 12, -4.0, 4.0), w));
      CHECK(std::fabs(sum(p) - 1.0) <= 1e-9);
    }
  }
}
