// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Visual-aware token selection: saliency scoring, exact top-S masks for the
// sparsification objective, and density-peak clustering of pruned tokens.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "svcd/kv_cache.hpp"
#include "svcd/numerics.hpp"

namespace svcd::vats {

struct SaliencyScores {
  Vector relevance;  // g_i = <K_i, q>^2
  Vector visual;     // P_i, sums to 1
  Vector aggregate;  // delta_i = g_i + lambda * P_i
  double lambda = 0.0;
};

SaliencyScores make_saliency(Vector relevance, Vector visual, double lambda);

// P = softmax(r) where r_i is the attention mass token i's queries placed on
// visual keys (already averaged over the early layers and all heads).
Vector visual_saliency(std::span<const double> visual_mass);
// Reads r from the rows of `layer`. Throws InputError("no visual tokens")
// when the layer holds no visual row.
Vector visual_saliency(const LayerCache& layer);

struct SparsifyMask {
  std::vector<std::uint8_t> flags;
  std::size_t retained = 0;
  std::size_t recent_window = 0;
};

// Keeps the S tokens with largest delta (earlier position wins ties) after
// force-retaining the last `w_recent` positions. With w_recent == 0 the
// result minimizes the sparsification objective exactly.
SparsifyMask select_top_s(std::span<const double> delta, std::size_t s, std::size_t w_recent);
// General form: `forced` rows are always retained and count toward S.
SparsifyMask select_top_s(std::span<const double> delta, std::size_t s,
                          std::span<const std::uint8_t> forced);

// E(M) = sum_i (1 - M_i) g_i - sum_i M_i lambda P_i for binary M.
double objective_value(std::span<const std::uint8_t> mask, std::span<const double> relevance,
                       std::span<const double> visual, double lambda);

struct Cluster {
  std::size_t center = 0;            // point index
  std::vector<std::size_t> members;  // ascending point indices
  Vector weights;                    // softmax of member delta
};

struct ClusterAssignment {
  std::vector<std::size_t> cluster_of;  // per point
  std::vector<Cluster> clusters;
  Vector density;
  Vector separation;  // distance to nearest higher-density point
};

inline constexpr double kDensityEps = 1e-8;

// max(1, ceil(rho_merge * pruned)), capped at `pruned`.
std::size_t cluster_count(double rho_merge, std::size_t pruned);

// k-nearest-neighbour density-peak clustering of `points` (one row per pruned
// token). Density is 1 / (eps + mean distance to the k nearest neighbours);
// centers are the top `centers` points by density x separation; the rest
// join, in decreasing-density order, the cluster of their nearest
// already-assigned point of higher density. k is clamped to n - 1.
ClusterAssignment cluster_pruned(const Matrix& points, std::span<const double> delta,
                                 std::size_t k, std::size_t centers);

// Folds each cluster into one key/value pair per cluster, weighting members by
// the cluster's softmax weights. `rows[p]` is the physical row of point p.
std::vector<MergedToken> merge_clusters(const ClusterAssignment& assignment,
                                        std::span<const std::size_t> rows, const Matrix& keys,
                                        const Matrix& values);

}  // namespace svcd::vats
