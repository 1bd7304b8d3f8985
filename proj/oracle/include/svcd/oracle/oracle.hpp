// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Deliberately naive reference implementations used by the test suites. They
// read model weights through public accessors but share no computation with
// the engine: arithmetic, softmax, attention and clustering are rewritten here.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "svcd/toy_transformer.hpp"

namespace svcd::oracle {

struct OracleReport {
  std::string instance;
  double oracle_value = 0.0;
  double engine_value = 0.0;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

OracleReport compare(std::string instance, double oracle_value, double engine_value,
                     double tolerance);
OracleReport compare(std::string instance, const std::vector<double>& oracle_values,
                     const std::vector<double>& engine_values, double tolerance);

inline constexpr std::size_t kMaxEnumeration = 20;

struct BruteForceMask {
  std::vector<std::uint8_t> mask;
  double objective = 0.0;
};

// Enumerates every mask with exactly S retained entries and minimises
// sum_i (1 - M_i) <K_i, q>^2 - lambda sum_i M_i P_i. Among equal objectives
// the lexicographically smallest mask wins. Refuses L > 20.
BruteForceMask brute_force_mask(const std::vector<double>& q,
                                const std::vector<std::vector<double>>& keys,
                                const std::vector<double>& visual, double lambda, std::size_t s);

// Greedy decode that recomputes attention over the whole prefix from scratch
// for every layer of every new token. Input order: prompt[0], visual tokens,
// prompt[1..], generated tokens. Stops at EOS (excluded) or max_len.
std::vector<TokenId> reference_full_decode(const ToyTransformer& model,
                                           const std::vector<TokenId>& prompt,
                                           const ImageDescriptor& image, std::size_t max_len);

inline constexpr std::size_t kMaxClusterPoints = 64;

struct ReferenceClustering {
  std::vector<std::size_t> center_of;  // per point: index of its cluster center
  std::vector<std::size_t> centers;    // in selection order
};

// kNN density-peak clustering with extended-precision distances.
ReferenceClustering reference_clustering(const std::vector<std::vector<double>>& points,
                                         std::size_t k, std::size_t centers);

}  // namespace svcd::oracle
