// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include "svcd/sparse_attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "svcd/errors.hpp"
#include "svcd/sac.hpp"
#include "svcd/vats.hpp"

namespace svcd {

namespace {

std::size_t ceil_fraction(double rate, std::size_t n) {
  return static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n)));
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

void SparsifyConfig::validate() const {
  require(sparsity_rate > 0.0 && sparsity_rate <= 1.0, "sparsity_rate must be in (0, 1]");
  require(lambda >= 0.0, "lambda must be non-negative");
  require(rho_merge >= 0.0 && rho_merge <= 1.0, "rho_merge must be in [0, 1]");
  require(knn_k >= 1, "knn_k must be at least 1");
  require(early_layer_frac > 0.0 && early_layer_frac <= 1.0, "early_layer_frac must be in (0, 1]");
  require(beta >= 0.0, "beta must be non-negative");
  require(!(per_head_mask && cache_mode == CacheMode::kCompacted),
          "per_head_mask is only available in logical cache mode");
}

SparseVisualAttention::SparseVisualAttention(const SparsifyConfig& config, const ModelDims& dims)
    : config_(config), dims_(dims) {
  config_.validate();
  early_layers_ = std::max<std::size_t>(1, ceil_fraction(config.early_layer_frac, dims.layers));
  early_layers_ = std::min(early_layers_, dims.layers);
}

SparseVisualAttention::Budget SparseVisualAttention::budget(const KvCache& cache,
                                                            const LayerCache& lc) const {
  Budget b;
  const std::size_t rows = lc.length();
  if (rows <= config_.l_min || config_.sparsity_rate >= 1.0) return b;
  if (config_.cache_mode == CacheMode::kLogical) {
    const std::size_t s = std::max<std::size_t>(1, ceil_fraction(config_.sparsity_rate, rows));
    if (s < rows) b = Budget{true, s};
    return b;
  }
  // Compacted: keep the physical length near rate * tokens seen, counting the
  // aggregates a compaction will add.
  const std::size_t target =
      std::max<std::size_t>(1, ceil_fraction(config_.sparsity_rate, cache.tokens()));
  if (rows <= target + config_.compact_slack) return b;
  std::size_t keep = target;
  if (config_.merging()) {
    while (keep > 1 && keep + vats::cluster_count(config_.rho_merge, rows - keep) > target) --keep;
  }
  b = Budget{true, keep};
  return b;
}

std::vector<std::uint8_t> SparseVisualAttention::forced_rows(const KvCache& cache,
                                                             const LayerCache& lc,
                                                             std::size_t keep) const {
  std::vector<std::uint8_t> forced(lc.length(), 0);
  const std::size_t window = std::min(config_.w_recent, keep);
  const auto newest = static_cast<std::int64_t>(cache.tokens()) - 1;
  for (std::size_t j = 0; j < lc.length(); ++j) {
    const RowInfo& info = lc.info(j);
    if (!info.aggregate && info.position > newest - static_cast<std::int64_t>(window)) forced[j] = 1;
    if (config_.text_only_pruning && info.visual) forced[j] = 1;
  }
  return forced;
}

std::vector<AttentionResult> SparseVisualAttention::attend(KvCache& cache, std::size_t layer,
                                                           std::span<const Vector> queries) {
  LayerCache& lc = cache.layer(layer);
  const std::size_t heads = lc.heads();
  const std::size_t rows = lc.length();
  if (queries.size() != heads) throw ContractViolation("attend: expected one query per head");
  const double root_d = std::sqrt(static_cast<double>(lc.head_dim()));

  std::vector<Vector> raw(heads);
  for (std::size_t h = 0; h < heads; ++h) raw[h] = lc.row_scores(h, queries[h]);

  const double beta = config_.effective_beta();
  std::vector<sac::PenaltyWeights> penalty;
  std::vector<Vector> calibrated;
  if (beta != 0.0) {
    for (std::size_t h = 0; h < heads; ++h) {
      penalty.push_back(sac::penalty_weights(lc.column_sums(h), beta));
      calibrated.push_back(sac::calibrate_scores(raw[h], penalty.back()));
    }
  }
  const std::vector<Vector>& scores = beta != 0.0 ? calibrated : raw;

  lc.clear_mask();
  LayerDiagnostics diag;
  diag.rows = rows;
  const Budget b = budget(cache, lc);
  if (b.active) {
    const std::vector<Vector>& ranked = config_.sac_before_vats ? scores : raw;
    std::vector<std::uint8_t> forced = forced_rows(cache, lc, b.keep);
    std::size_t n_forced = 0;
    for (std::uint8_t f : forced) n_forced += f;
    const std::size_t keep = std::max(b.keep, n_forced);
    if (keep < rows) {
      const double lambda = config_.effective_lambda();
      Vector visual(rows, 0.0);
      if (lambda != 0.0 && !lc.visual_rows().empty()) visual = vats::visual_saliency(lc);

      auto relevance_of = [&](std::size_t h, std::size_t j) {
        const double ip = ranked[h][j] * root_d;
        return ip * ip;
      };
      const std::size_t groups = config_.per_head_mask ? heads : 1;
      for (std::size_t g = 0; g < groups; ++g) {
        Vector relevance(rows, 0.0);
        for (std::size_t j = 0; j < rows; ++j) {
          if (config_.per_head_mask) {
            relevance[j] = relevance_of(g, j);
          } else {
            for (std::size_t h = 0; h < heads; ++h) relevance[j] += relevance_of(h, j);
            relevance[j] /= static_cast<double>(heads);
          }
        }
        const vats::SaliencyScores sal = vats::make_saliency(std::move(relevance), visual, lambda);
        vats::SparsifyMask mask = vats::select_top_s(sal.aggregate, keep, forced);

        std::vector<std::size_t> pruned;
        for (std::size_t j = 0; j < rows; ++j) {
          if (!mask.flags[j]) pruned.push_back(j);
        }
        if (config_.per_head_mask) {
          lc.set_head_mask(g, mask.flags);
        } else {
          lc.set_mask(mask.flags);
        }
        if (config_.merging() && !pruned.empty()) {
          const std::size_t width = config_.per_head_mask ? lc.head_dim() : heads * lc.head_dim();
          Matrix points(0, width);
          points.reserve_rows(pruned.size());
          Vector delta;
          Vector point;
          for (std::size_t j : pruned) {
            point.clear();
            for (std::size_t h = 0; h < heads; ++h) {
              if (config_.per_head_mask && h != g) continue;
              auto k = lc.keys(h).row(j);
              point.insert(point.end(), k.begin(), k.end());
            }
            points.append_row(point);
            delta.push_back(sal.aggregate[j]);
          }
          const vats::ClusterAssignment assignment = vats::cluster_pruned(
              points, delta, config_.knn_k, vats::cluster_count(config_.rho_merge, pruned.size()));
          for (std::size_t h = 0; h < heads; ++h) {
            if (config_.per_head_mask && h != g) continue;
            lc.set_merged(h, vats::merge_clusters(assignment, pruned, lc.keys(h), lc.values(h)));
          }
        }
        if (g == 0) {
          for (std::size_t j : pruned) diag.pruned_positions.push_back(lc.info(j).position);
        }
      }
      diag.sparsified = true;
    }
  }

  std::vector<AttentionResult> results;
  results.reserve(heads);
  double visual_mass = 0.0;
  for (std::size_t h = 0; h < heads; ++h) {
    const auto merged = lc.merged(h);
    Vector merged_scores = lc.merged_scores(h, queries[h]);
    if (beta != 0.0) {
      for (std::size_t t = 0; t < merged.size(); ++t) {
        double w = 0.0;
        for (std::size_t m = 0; m < merged[t].members.size(); ++m) {
          w += merged[t].weights[m] * penalty[h].w[merged[t].members[m]];
        }
        merged_scores[t] = sac::calibrate_score(merged_scores[t], w, beta);
      }
    }
    AttentionResult r = lc.attend_with_scores(h, scores[h], merged_scores);

    if (config_.sac_input == SacInput::kProbabilities) {
      lc.accumulate(h, r);
    } else {
      Vector raw_support(r.support.size(), 0.0);
      for (std::size_t k = 0; k < r.support.size(); ++k) {
        if (r.is_row(k)) raw_support[k] = raw[h][r.support[k]];
      }
      lc.accumulate(h, r, raw_support);
    }

    if (layer < early_layers_) {
      for (std::size_t k = 0; k < r.support.size(); ++k) {
        bool visual = false;
        if (r.is_row(k)) {
          visual = lc.info(r.support[k]).visual;
        } else {
          for (std::size_t row : merged[r.support[k] - rows].members) visual = visual || lc.info(row).visual;
        }
        if (visual) visual_mass += r.probs[k];
      }
    }
    if (diag.sparsified) diag.attention_error += lc.attention_error(h, queries[h]);
    results.push_back(std::move(r));
  }
  if (layer < early_layers_) {
    cache.add_visual_mass(visual_mass / static_cast<double>(heads * early_layers_));
  }
  diag.attention_error /= static_cast<double>(heads);
  diag.retained = lc.retained(0);
  diag.merged = lc.merged(0).size();
  current_.push_back(std::move(diag));
  return results;
}

void SparseVisualAttention::finish_step(KvCache& cache) {
  cache.finish_token();
  peak_elements_ = std::max(peak_elements_, cache.element_count());
  for (const LayerDiagnostics& d : current_) {
    error_sum_ += d.attention_error;
    ++error_count_;
  }
  last_ = std::move(current_);
  current_.clear();
  if (config_.cache_mode == CacheMode::kCompacted) {
    for (std::size_t l = 0; l < cache.layers(); ++l) cache.layer(l).compact();
  }
}

}  // namespace svcd
