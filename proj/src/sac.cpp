// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include "svcd/sac.hpp"

#include "svcd/errors.hpp"

namespace svcd::sac {

PenaltyWeights penalty_weights(std::span<const double> column_sums, double beta) {
  if (column_sums.empty()) throw ContractViolation("penalty_weights: no tokens (L = 0)");
  if (beta < 0.0) throw ConfigError("penalty_weights: beta must be non-negative");
  return PenaltyWeights{stable_softmax(column_sums), beta};
}

PenaltyWeights penalty_weights(const LayerCache& layer, std::size_t head, double beta) {
  return penalty_weights(layer.column_sums(head), beta);
}

double calibrate_score(double score, double weight, double beta) {
  return (1.0 + beta) * score - beta * (weight * score);
}

Vector calibrate_scores(std::span<const double> scores, const PenaltyWeights& weights) {
  if (scores.size() != weights.w.size()) {
    throw ContractViolation("calibrate_scores: score and weight lengths differ");
  }
  Vector out(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) {
    out[j] = calibrate_score(scores[j], weights.w[j], weights.beta);
  }
  return out;
}

}  // namespace svcd::sac
