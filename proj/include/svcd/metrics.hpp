// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "svcd/decoding.hpp"

namespace svcd::metrics {

struct ChairResult {
  double value = 0.0;
  bool empty_generation = false;  // G was empty; value is defined as 0
};

// Findings named in a generated sequence, ascending and deduplicated.
std::vector<TokenId> extract_findings(const Model& model, std::span<const TokenId> tokens);

// |G - S_ref| / |G|. Inputs are treated as sets.
ChairResult chair(std::span<const TokenId> generated, std::span<const TokenId> reference);

// |G n S_ref| / |S_ref|. Throws InputError when S_ref is empty.
double recall(std::span<const TokenId> generated, std::span<const TokenId> reference);

// Fraction of exact matches. Throws InputError on length mismatch or empty input.
double closed_ended_accuracy(std::span<const std::string> predictions,
                             std::span<const std::string> labels);

struct RunTiming {
  double wall_seconds = 0.0;
  std::size_t tokens = 0;
  double tokens_per_second = 0.0;
  std::size_t peak_elements = 0;
};

RunTiming measure_run(const std::function<DecodeResult()>& run);

// Median of an unordered sample; throws InputError when empty.
double median(std::vector<double> sample);

}  // namespace svcd::metrics
