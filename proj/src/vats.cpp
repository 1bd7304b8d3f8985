// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include "svcd/vats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "svcd/errors.hpp"

namespace svcd::vats {

SaliencyScores make_saliency(Vector relevance, Vector visual, double lambda) {
  if (relevance.size() != visual.size()) {
    throw ContractViolation("make_saliency: relevance and visual saliency lengths differ");
  }
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  SaliencyScores s;
  s.aggregate.resize(relevance.size());
  for (std::size_t i = 0; i < relevance.size(); ++i) s.aggregate[i] = relevance[i] + lambda * visual[i];
  s.relevance = std::move(relevance);
  s.visual = std::move(visual);
  s.lambda = lambda;
  return s;
}

Vector visual_saliency(std::span<const double> visual_mass) {
  if (visual_mass.empty()) throw InputError("visual_saliency: empty accumulator");
  return stable_softmax(visual_mass);
}

Vector visual_saliency(const LayerCache& layer) {
  if (layer.visual_rows().empty()) throw InputError("visual_saliency: no visual tokens");
  Vector r;
  r.reserve(layer.length());
  for (const RowInfo& info : layer.infos()) r.push_back(info.visual_mass);
  return visual_saliency(r);
}

SparsifyMask select_top_s(std::span<const double> delta, std::size_t s,
                          std::span<const std::uint8_t> forced) {
  const std::size_t n = delta.size();
  if (s == 0) throw ConfigError("select_top_s: S must be at least 1");
  if (s > n) {
    throw ConfigError("select_top_s: S=" + std::to_string(s) + " exceeds L=" + std::to_string(n));
  }
  if (forced.size() != n) throw ContractViolation("select_top_s: forced flags length != L");
  SparsifyMask m;
  m.flags.assign(n, 0);
  std::vector<std::size_t> free_rows;
  free_rows.reserve(n);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (forced[i]) {
      m.flags[i] = 1;
      ++kept;
    } else {
      free_rows.push_back(i);
    }
  }
  if (kept > s) throw ContractViolation("select_top_s: forced rows exceed S");
  m.recent_window = kept;
  const std::size_t need = s - kept;
  if (need > 0) {
    auto better = [&](std::size_t a, std::size_t b) {
      return delta[a] > delta[b] || (delta[a] == delta[b] && a < b);
    };
    auto nth = free_rows.begin() + static_cast<std::ptrdiff_t>(need - 1);
    std::nth_element(free_rows.begin(), nth, free_rows.end(), better);
    for (auto it = free_rows.begin(); it <= nth; ++it) m.flags[*it] = 1;
  }
  m.retained = s;
  return m;
}

SparsifyMask select_top_s(std::span<const double> delta, std::size_t s, std::size_t w_recent) {
  if (w_recent > s) throw ConfigError("select_top_s: recency window exceeds S");
  if (s > delta.size()) {
    throw ConfigError("select_top_s: S=" + std::to_string(s) + " exceeds L=" +
                      std::to_string(delta.size()));
  }
  std::vector<std::uint8_t> forced(delta.size(), 0);
  for (std::size_t i = delta.size() - w_recent; i < delta.size(); ++i) forced[i] = 1;
  return select_top_s(delta, s, forced);
}

double objective_value(std::span<const std::uint8_t> mask, std::span<const double> relevance,
                       std::span<const double> visual, double lambda) {
  if (mask.size() != relevance.size() || mask.size() != visual.size()) {
    throw ContractViolation("objective_value: inconsistent lengths");
  }
  double pruned = 0.0;
  double kept = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      kept += lambda * visual[i];
    } else {
      pruned += relevance[i];
    }
  }
  return pruned - kept;
}

std::size_t cluster_count(double rho_merge, std::size_t pruned) {
  if (pruned == 0) return 0;
  const auto c = static_cast<std::size_t>(std::ceil(rho_merge * static_cast<double>(pruned)));
  return std::clamp<std::size_t>(c, 1, pruned);
}

ClusterAssignment cluster_pruned(const Matrix& points, std::span<const double> delta,
                                 std::size_t k, std::size_t centers) {
  const std::size_t n = points.rows();
  if (n == 0) throw ContractViolation("cluster_pruned: no pruned tokens");
  if (delta.size() != n) throw ContractViolation("cluster_pruned: delta length != point count");
  if (k == 0) throw ConfigError("cluster_pruned: k must be at least 1");
  ClusterAssignment a;
  a.cluster_of.assign(n, 0);
  if (n == 1) {
    a.density = {1.0 / kDensityEps};
    a.separation = {0.0};
    a.clusters.push_back(Cluster{0, {0}, {1.0}});
    return a;
  }
  k = std::min(k, n - 1);
  centers = std::clamp<std::size_t>(centers, 1, n);

  std::vector<double> dist(n * n, 0.0);
  double max_dist = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double acc = 0.0;
      auto pi = points.row(i);
      auto pj = points.row(j);
      for (std::size_t c = 0; c < pi.size(); ++c) {
        const double d = pi[c] - pj[c];
        acc += d * d;
      }
      const double d = std::sqrt(acc);
      dist[i * n + j] = d;
      dist[j * n + i] = d;
      max_dist = std::max(max_dist, d);
    }
  }

  a.density.resize(n);
  std::vector<double> nearest;
  for (std::size_t i = 0; i < n; ++i) {
    nearest.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) nearest.push_back(dist[i * n + j]);
    }
    std::partial_sort(nearest.begin(), nearest.begin() + static_cast<std::ptrdiff_t>(k),
                      nearest.end());
    double mean = 0.0;
    for (std::size_t t = 0; t < k; ++t) mean += nearest[t];
    mean /= static_cast<double>(k);
    a.density[i] = 1.0 / (kDensityEps + mean);
  }

  a.separation.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (a.density[j] > a.density[i] && (best < 0.0 || dist[i * n + j] < best)) best = dist[i * n + j];
    }
    a.separation[i] = best < 0.0 ? max_dist : best;
  }

  std::vector<std::size_t> by_gamma(n);
  std::iota(by_gamma.begin(), by_gamma.end(), 0);
  std::stable_sort(by_gamma.begin(), by_gamma.end(), [&](std::size_t x, std::size_t y) {
    return a.density[x] * a.separation[x] > a.density[y] * a.separation[y];
  });
  std::vector<long> cluster(n, -1);
  for (std::size_t c = 0; c < centers; ++c) cluster[by_gamma[c]] = static_cast<long>(c);

  std::vector<std::size_t> by_density(n);
  std::iota(by_density.begin(), by_density.end(), 0);
  std::stable_sort(by_density.begin(), by_density.end(),
                   [&](std::size_t x, std::size_t y) { return a.density[x] > a.density[y]; });
  std::vector<std::uint8_t> seen(n, 0);
  for (std::size_t i : by_density) {
    if (cluster[i] < 0) {
      long target = -1;
      double best = 0.0;
      std::size_t best_j = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (!seen[j] || cluster[j] < 0) continue;
        const double d = dist[i * n + j];
        if (target < 0 || d < best || (d == best && j < best_j)) {
          target = cluster[j];
          best = d;
          best_j = j;
        }
      }
      if (target < 0) {
        // Nothing denser is assigned yet: fall back to the nearest center.
        for (std::size_t c = 0; c < centers; ++c) {
          const std::size_t j = by_gamma[c];
          const double d = dist[i * n + j];
          if (target < 0 || d < best || (d == best && j < best_j)) {
            target = static_cast<long>(c);
            best = d;
            best_j = j;
          }
        }
      }
      cluster[i] = target;
    }
    seen[i] = 1;
  }

  a.clusters.resize(centers);
  for (std::size_t c = 0; c < centers; ++c) a.clusters[c].center = by_gamma[c];
  for (std::size_t i = 0; i < n; ++i) {
    a.cluster_of[i] = static_cast<std::size_t>(cluster[i]);
    a.clusters[a.cluster_of[i]].members.push_back(i);
  }
  for (Cluster& c : a.clusters) {
    Vector d;
    d.reserve(c.members.size());
    for (std::size_t m : c.members) d.push_back(delta[m]);
    c.weights = stable_softmax(d);
  }
  return a;
}

std::vector<MergedToken> merge_clusters(const ClusterAssignment& assignment,
                                        std::span<const std::size_t> rows, const Matrix& keys,
                                        const Matrix& values) {
  if (rows.size() != assignment.cluster_of.size()) {
    throw ContractViolation("merge_clusters: row map length != point count");
  }
  const std::size_t dim = keys.cols();
  std::vector<MergedToken> out;
  out.reserve(assignment.clusters.size());
  for (const Cluster& c : assignment.clusters) {
    MergedToken t;
    t.key.assign(dim, 0.0);
    t.value.assign(values.cols(), 0.0);
    for (std::size_t m = 0; m < c.members.size(); ++m) {
      const std::size_t row = rows[c.members[m]];
      const double w = c.weights[m];
      auto k = keys.row(row);
      auto v = values.row(row);
      for (std::size_t d = 0; d < dim; ++d) t.key[d] += w * k[d];
      for (std::size_t d = 0; d < v.size(); ++d) t.value[d] += w * v[d];
      t.members.push_back(row);
    }
    t.weights = c.weights;
    t.center = rows[c.center];
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace svcd::vats
