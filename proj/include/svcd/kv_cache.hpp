// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "svcd/numerics.hpp"

namespace svcd {

// Logical: pruned rows stay in storage and are skipped by attention; the mask
// is recomputed every step. Compacted: pruned rows are physically evicted and
// cluster aggregates become ordinary rows.
enum class CacheMode { kLogical, kCompacted };

struct RowInfo {
  std::int64_t position = 0;  // logical token position; aggregates carry their center's
  bool visual = false;
  bool aggregate = false;
  double visual_mass = 0.0;   // attention mass this token's queries put on visual keys
};

// Pruned rows of one head folded into a single key/value pair.
struct MergedToken {
  Vector key;
  Vector value;
  std::vector<std::size_t> members;  // physical rows
  Vector weights;                    // same order as members, sums to 1
  std::size_t center = 0;            // physical row of the cluster center
};

// Attention of one query over the current support. Support entries below
// `rows` are physical rows; entries at or above index pending merged tokens.
struct AttentionResult {
  std::size_t rows = 0;
  std::vector<std::size_t> support;
  Vector scores;  // pre-softmax, already scaled by 1/sqrt(D)
  Vector probs;
  Vector output;

  bool is_row(std::size_t k) const { return support[k] < rows; }
};

struct CompactionStats {
  bool applied = false;
  std::size_t evicted = 0;
  std::size_t aggregates = 0;
  std::vector<std::int64_t> evicted_positions;
};

class LayerCache {
 public:
  LayerCache(std::size_t heads, std::size_t head_dim);

  std::size_t heads() const { return keys_.size(); }
  std::size_t head_dim() const { return head_dim_; }
  std::size_t length() const { return info_.size(); }

  std::size_t append(std::span<const Vector> keys, std::span<const Vector> values,
                     const RowInfo& info);

  const Matrix& keys(std::size_t head) const { return keys_.at(head); }
  const Matrix& values(std::size_t head) const { return values_.at(head); }
  const RowInfo& info(std::size_t row) const { return info_.at(row); }
  std::span<const RowInfo> infos() const { return info_; }
  void set_visual_mass(std::size_t row, double mass) { info_.at(row).visual_mass = mass; }

  bool has_mask() const { return has_mask_; }
  // Retention flags for `head`; all ones when no mask is pending.
  std::span<const std::uint8_t> mask(std::size_t head) const;
  // Installs one mask shared by all heads.
  void set_mask(std::vector<std::uint8_t> flags);
  void set_head_mask(std::size_t head, std::vector<std::uint8_t> flags);
  std::span<const MergedToken> merged(std::size_t head) const { return merged_.at(head); }
  void set_merged(std::size_t head, std::vector<MergedToken> tokens);
  // Drops any pending mask and merged tokens.
  void clear_mask();
  std::size_t retained(std::size_t head) const;
  std::size_t support_size(std::size_t head) const { return retained(head) + merged_[head].size(); }

  Vector& column_sums(std::size_t head) { return column_sums_.at(head); }
  const Vector& column_sums(std::size_t head) const { return column_sums_.at(head); }
  // Adds the probabilities (or, when `values` is given, those values) of the
  // row entries of `result` to the column sums. Merged entries are skipped.
  void accumulate(std::size_t head, const AttentionResult& result,
                  std::span<const double> values = {});

  std::vector<std::size_t> visual_rows() const;

  // Scaled scores q.K_j / sqrt(D) over every physical row, pruned or not.
  Vector row_scores(std::size_t head, std::span<const double> q) const;
  Vector merged_scores(std::size_t head, std::span<const double> q) const;

  // Softmax attention over retained rows and merged tokens using cached keys.
  AttentionResult masked_attention(std::size_t head, std::span<const double> q) const;
  // Same support, caller-provided pre-softmax scores (indexed by physical row
  // and by merged token respectively).
  AttentionResult attend_with_scores(std::size_t head, std::span<const double> row_scores,
                                     std::span<const double> merged_scores) const;

  // Sum over pruned rows of <K_i, q>^2. Merged tokens do not count.
  double attention_error(std::size_t head, std::span<const double> q) const;

  // Evicts pruned rows and appends one row per merged token. Requires the
  // pending mask and clusters to be shared across heads.
  CompactionStats compact();

 private:
  void check_head(std::size_t head) const;

  std::size_t head_dim_;
  std::vector<Matrix> keys_;
  std::vector<Matrix> values_;
  std::vector<RowInfo> info_;
  bool has_mask_ = false;
  std::vector<std::vector<std::uint8_t>> masks_;
  std::vector<std::vector<MergedToken>> merged_;
  std::vector<Vector> column_sums_;
  mutable std::vector<std::uint8_t> ones_;
};

class KvCache {
 public:
  KvCache(std::size_t layers, std::size_t heads, std::size_t head_dim);

  std::size_t layers() const { return layers_.size(); }
  std::size_t heads() const { return heads_; }
  std::size_t head_dim() const { return head_dim_; }
  LayerCache& layer(std::size_t l) { return layers_.at(l); }
  const LayerCache& layer(std::size_t l) const { return layers_.at(l); }

  // Number of tokens begun so far (the logical sequence length).
  std::size_t tokens() const { return tokens_; }

  // Opens the next token; every layer may then append exactly one row for it.
  std::int64_t begin_token(bool visual);
  // Appends the open token's keys/values (one vector per head) to `layer`.
  // Returns the physical row index.
  std::size_t append(std::size_t layer, std::span<const Vector> keys,
                     std::span<const Vector> values);
  bool current_is_visual() const { return current_visual_; }

  // Visual attention mass of the open token, accumulated while it is processed.
  double current_visual_mass() const { return current_mass_; }
  void add_visual_mass(double mass) { current_mass_ += mass; }
  // Writes the open token's final visual mass into its row in every layer.
  void finish_token();

  // Free-form per-session state a model may keep alongside the cache.
  Vector& model_state() { return model_state_; }
  const Vector& model_state() const { return model_state_; }

  // Attended elements across layers: sum of support sizes x 2 x heads x D.
  std::size_t element_count() const;

 private:
  std::size_t heads_;
  std::size_t head_dim_;
  std::vector<LayerCache> layers_;
  std::vector<std::int64_t> last_position_;
  std::size_t tokens_ = 0;
  bool open_ = false;
  bool current_visual_ = false;
  double current_mass_ = 0.0;
  Vector model_state_;
};

}  // namespace svcd
