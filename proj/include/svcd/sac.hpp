// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Sinking-attention calibration: tokens that have soaked up a large share of
// past attention get their scores damped.

#include <span>

#include "svcd/kv_cache.hpp"
#include "svcd/numerics.hpp"

namespace svcd::sac {

struct PenaltyWeights {
  Vector w;  // sums to 1
  double beta = 0.0;
};

// w = softmax over j of c_j, the cumulative attention key j has received from
// every query at or after it. Throws ContractViolation when there are no keys.
PenaltyWeights penalty_weights(std::span<const double> column_sums, double beta);
PenaltyWeights penalty_weights(const LayerCache& layer, std::size_t head, double beta);

// s'_j = (1 + beta) s_j - beta (w_j s_j). The caller applies softmax afterwards.
Vector calibrate_scores(std::span<const double> scores, const PenaltyWeights& weights);
double calibrate_score(double score, double weight, double beta);

}  // namespace svcd::sac
