// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include "svcd/kv_cache.hpp"

#include <cmath>
#include <string>

#include "svcd/errors.hpp"

namespace svcd {

namespace {

Vector weighted_values(const Matrix& values, std::span<const MergedToken> merged,
                       const AttentionResult& r, std::size_t dim) {
  Vector out(dim, 0.0);
  for (std::size_t k = 0; k < r.support.size(); ++k) {
    const double p = r.probs[k];
    std::span<const double> v = r.is_row(k) ? values.row(r.support[k])
                                            : std::span<const double>(merged[r.support[k] - r.rows].value);
    for (std::size_t d = 0; d < dim; ++d) out[d] += p * v[d];
  }
  return out;
}

}  // namespace

LayerCache::LayerCache(std::size_t heads, std::size_t head_dim)
    : head_dim_(head_dim),
      keys_(heads, Matrix(0, head_dim)),
      values_(heads, Matrix(0, head_dim)),
      masks_(heads),
      merged_(heads),
      column_sums_(heads) {
  if (heads == 0 || head_dim == 0) {
    throw ConfigError("LayerCache: heads and head_dim must be positive");
  }
}

void LayerCache::check_head(std::size_t head) const {
  if (head >= heads()) {
    throw ContractViolation("LayerCache: head " + std::to_string(head) + " out of range");
  }
}

std::size_t LayerCache::append(std::span<const Vector> keys, std::span<const Vector> values,
                               const RowInfo& info) {
  if (keys.size() != heads() || values.size() != heads()) {
    throw ContractViolation("LayerCache::append: expected one key and value per head");
  }
  for (std::size_t h = 0; h < heads(); ++h) {
    if (keys[h].size() != head_dim_ || values[h].size() != head_dim_) {
      throw ContractViolation("LayerCache::append: vector dim != head dim " +
                              std::to_string(head_dim_));
    }
  }
  for (std::size_t h = 0; h < heads(); ++h) {
    keys_[h].append_row(keys[h]);
    values_[h].append_row(values[h]);
    column_sums_[h].push_back(0.0);
    if (has_mask_) masks_[h].push_back(1);
  }
  info_.push_back(info);
  return info_.size() - 1;
}

std::span<const std::uint8_t> LayerCache::mask(std::size_t head) const {
  check_head(head);
  if (has_mask_) return masks_[head];
  ones_.assign(length(), 1);
  return ones_;
}

void LayerCache::set_mask(std::vector<std::uint8_t> flags) {
  if (flags.size() != length()) {
    throw ContractViolation("LayerCache::set_mask: |M| != L");
  }
  for (auto& m : masks_) m = flags;
  has_mask_ = true;
}

void LayerCache::set_head_mask(std::size_t head, std::vector<std::uint8_t> flags) {
  check_head(head);
  if (flags.size() != length()) {
    throw ContractViolation("LayerCache::set_head_mask: |M| != L");
  }
  if (!has_mask_) {
    for (auto& m : masks_) m.assign(length(), 1);
    has_mask_ = true;
  }
  masks_[head] = std::move(flags);
}

void LayerCache::set_merged(std::size_t head, std::vector<MergedToken> tokens) {
  check_head(head);
  std::span<const std::uint8_t> m = mask(head);
  for (const MergedToken& t : tokens) {
    if (t.key.size() != head_dim_ || t.value.size() != head_dim_ ||
        t.members.size() != t.weights.size() || t.members.empty()) {
      throw ContractViolation("LayerCache::set_merged: malformed merged token");
    }
    for (std::size_t row : t.members) {
      if (row >= length() || m[row]) {
        throw ContractViolation("LayerCache::set_merged: members must be pruned rows");
      }
    }
  }
  merged_[head] = std::move(tokens);
}

void LayerCache::clear_mask() {
  has_mask_ = false;
  for (auto& m : masks_) m.clear();
  for (auto& t : merged_) t.clear();
}

std::size_t LayerCache::retained(std::size_t head) const {
  check_head(head);
  if (!has_mask_) return length();
  std::size_t n = 0;
  for (std::uint8_t f : masks_[head]) n += f;
  return n;
}

void LayerCache::accumulate(std::size_t head, const AttentionResult& result,
                            std::span<const double> values) {
  check_head(head);
  const bool use_values = !values.empty();
  if (use_values && values.size() != result.support.size()) {
    throw ContractViolation("LayerCache::accumulate: value count != support size");
  }
  Vector& c = column_sums_[head];
  for (std::size_t k = 0; k < result.support.size(); ++k) {
    if (!result.is_row(k)) continue;
    c.at(result.support[k]) += use_values ? values[k] : result.probs[k];
  }
}

std::vector<std::size_t> LayerCache::visual_rows() const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < info_.size(); ++i) {
    if (info_[i].visual) rows.push_back(i);
  }
  return rows;
}

Vector LayerCache::row_scores(std::size_t head, std::span<const double> q) const {
  check_head(head);
  if (q.size() != head_dim_) throw ContractViolation("LayerCache: query dim != head dim");
  const double scale = std::sqrt(static_cast<double>(head_dim_));
  const Matrix& k = keys_[head];
  Vector s(k.rows());
  for (std::size_t j = 0; j < k.rows(); ++j) s[j] = dot(q, k.row(j)) / scale;
  return s;
}

Vector LayerCache::merged_scores(std::size_t head, std::span<const double> q) const {
  check_head(head);
  if (q.size() != head_dim_) throw ContractViolation("LayerCache: query dim != head dim");
  const double scale = std::sqrt(static_cast<double>(head_dim_));
  Vector s;
  s.reserve(merged_[head].size());
  for (const MergedToken& t : merged_[head]) s.push_back(dot(q, t.key) / scale);
  return s;
}

AttentionResult LayerCache::masked_attention(std::size_t head, std::span<const double> q) const {
  const Vector rs = row_scores(head, q);
  const Vector ms = merged_scores(head, q);
  return attend_with_scores(head, rs, ms);
}

AttentionResult LayerCache::attend_with_scores(std::size_t head, std::span<const double> row_scores,
                                               std::span<const double> merged_scores) const {
  check_head(head);
  if (row_scores.size() != length() || merged_scores.size() != merged_[head].size()) {
    throw ContractViolation("LayerCache::attend_with_scores: score count mismatch");
  }
  AttentionResult r;
  r.rows = length();
  std::span<const std::uint8_t> m = mask(head);
  const std::size_t n = retained(head) + merged_[head].size();
  r.support.reserve(n);
  r.scores.reserve(n);
  for (std::size_t j = 0; j < length(); ++j) {
    if (!m[j]) continue;
    r.support.push_back(j);
    r.scores.push_back(row_scores[j]);
  }
  for (std::size_t t = 0; t < merged_[head].size(); ++t) {
    r.support.push_back(length() + t);
    r.scores.push_back(merged_scores[t]);
  }
  if (r.support.empty()) throw ContractViolation("masked_attention: empty support");
  r.probs = stable_softmax(r.scores);
  r.output = weighted_values(values_[head], merged_[head], r, head_dim_);
  return r;
}

double LayerCache::attention_error(std::size_t head, std::span<const double> q) const {
  check_head(head);
  if (q.size() != head_dim_) throw ContractViolation("LayerCache: query dim != head dim");
  if (!has_mask_) return 0.0;
  const Matrix& k = keys_[head];
  double err = 0.0;
  for (std::size_t j = 0; j < length(); ++j) {
    if (masks_[head][j]) continue;
    const double ip = dot(k.row(j), q);
    err += ip * ip;
  }
  return err;
}

CompactionStats LayerCache::compact() {
  CompactionStats stats;
  if (!has_mask_) return stats;
  for (std::size_t h = 1; h < heads(); ++h) {
    if (masks_[h] != masks_[0] || merged_[h].size() != merged_[0].size()) {
      throw ContractViolation("LayerCache::compact: per-head masks cannot be compacted");
    }
  }
  stats.applied = true;
  const std::vector<std::uint8_t> keep = masks_[0];
  std::vector<std::vector<MergedToken>> merged = std::move(merged_);
  merged_.assign(heads(), {});

  // Aggregate metadata is derived from the members before they are evicted.
  std::vector<RowInfo> agg_info;
  std::vector<Vector> agg_sums(heads());
  for (const MergedToken& t : merged[0]) {
    RowInfo ri;
    ri.aggregate = true;
    ri.position = info_[t.center].position;
    for (std::size_t m = 0; m < t.members.size(); ++m) {
      const RowInfo& mi = info_[t.members[m]];
      ri.visual = ri.visual || mi.visual;
      ri.visual_mass += t.weights[m] * mi.visual_mass;
    }
    agg_info.push_back(ri);
  }
  for (std::size_t h = 0; h < heads(); ++h) {
    for (const MergedToken& t : merged[h]) {
      double c = 0.0;
      for (std::size_t row : t.members) c += column_sums_[h][row];
      agg_sums[h].push_back(c);
    }
  }

  for (std::size_t j = 0; j < length(); ++j) {
    if (!keep[j]) stats.evicted_positions.push_back(info_[j].position);
  }
  stats.evicted = stats.evicted_positions.size();
  for (std::size_t h = 0; h < heads(); ++h) {
    keys_[h].retain_rows(keep);
    values_[h].retain_rows(keep);
    Vector& c = column_sums_[h];
    std::size_t out = 0;
    for (std::size_t j = 0; j < c.size(); ++j) {
      if (keep[j]) c[out++] = c[j];
    }
    c.resize(out);
  }
  std::size_t out = 0;
  for (std::size_t j = 0; j < info_.size(); ++j) {
    if (keep[j]) info_[out++] = info_[j];
  }
  info_.resize(out);
  has_mask_ = false;
  for (auto& m : masks_) m.clear();

  for (std::size_t t = 0; t < agg_info.size(); ++t) {
    for (std::size_t h = 0; h < heads(); ++h) {
      keys_[h].append_row(merged[h][t].key);
      values_[h].append_row(merged[h][t].value);
      column_sums_[h].push_back(agg_sums[h][t]);
    }
    info_.push_back(agg_info[t]);
  }
  stats.aggregates = agg_info.size();
  return stats;
}

KvCache::KvCache(std::size_t layers, std::size_t heads, std::size_t head_dim)
    : heads_(heads), head_dim_(head_dim), last_position_(layers, -1) {
  if (layers == 0) throw ConfigError("KvCache: layer count must be positive");
  layers_.reserve(layers);
  for (std::size_t l = 0; l < layers; ++l) layers_.emplace_back(heads, head_dim);
}

std::int64_t KvCache::begin_token(bool visual) {
  open_ = true;
  current_visual_ = visual;
  current_mass_ = 0.0;
  return static_cast<std::int64_t>(tokens_++);
}

std::size_t KvCache::append(std::size_t layer, std::span<const Vector> keys,
                            std::span<const Vector> values) {
  if (layer >= layers_.size()) throw ContractViolation("KvCache::append: layer out of range");
  if (!open_) throw ContractViolation("KvCache::append: no open token (call begin_token)");
  const auto pos = static_cast<std::int64_t>(tokens_) - 1;
  if (last_position_[layer] == pos) {
    throw ContractViolation("KvCache::append: token already appended to layer " +
                            std::to_string(layer));
  }
  RowInfo info;
  info.position = pos;
  info.visual = current_visual_;
  info.visual_mass = current_mass_;
  const std::size_t row = layers_[layer].append(keys, values, info);
  last_position_[layer] = pos;
  return row;
}

void KvCache::finish_token() {
  if (!open_) return;
  const auto pos = static_cast<std::int64_t>(tokens_) - 1;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    LayerCache& lc = layers_[l];
    for (std::size_t j = lc.length(); j-- > 0;) {
      if (!lc.info(j).aggregate && lc.info(j).position == pos) {
        lc.set_visual_mass(j, current_mass_);
        break;
      }
    }
  }
  open_ = false;
}

std::size_t KvCache::element_count() const {
  std::size_t total = 0;
  for (const LayerCache& lc : layers_) {
    for (std::size_t h = 0; h < lc.heads(); ++h) total += lc.support_size(h) * 2 * head_dim_;
  }
  return total;
}

}  // namespace svcd
