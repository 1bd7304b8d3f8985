// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "svcd/model.hpp"

namespace svcd {

enum class SacInput { kProbabilities, kRawScores };

struct SparsifyConfig {
  double sparsity_rate = 0.8;  // retained fraction of the sequence
  double lambda = 0.1;
  std::size_t w_recent = 8;
  double rho_merge = 0.25;
  std::size_t knn_k = 5;
  double early_layer_frac = 0.25;
  bool per_head_mask = false;
  std::size_t l_min = 16;
  CacheMode cache_mode = CacheMode::kLogical;
  // Compacted mode only: the physical cache may exceed its budget by this many
  // rows before the next eviction.
  std::size_t compact_slack = 32;
  bool text_only_pruning = false;

  bool vats = true;  // off: rank by attention relevance only, no merging
  bool vps = true;   // off: lambda = 0
  bool merge_pruned = true;

  double beta = 0.1;
  bool sac = true;
  SacInput sac_input = SacInput::kProbabilities;
  bool sac_before_vats = true;

  double effective_lambda() const { return vats && vps ? lambda : 0.0; }
  double effective_beta() const { return sac ? beta : 0.0; }
  bool merging() const { return vats && merge_pruned && rho_merge > 0.0; }

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

struct LayerDiagnostics {
  std::size_t rows = 0;
  std::size_t retained = 0;
  std::size_t merged = 0;
  bool sparsified = false;
  double attention_error = 0.0;  // mean over heads
  std::vector<std::int64_t> pruned_positions;
};

// Attention policy implementing calibrated, visually aware sparse attention:
// per layer, scores are calibrated against each head's cumulative attention,
// a top-S retention mask is chosen by delta = g + lambda P, pruned rows are
// clustered and merged, and attention runs over retained rows plus merged
// tokens. Accumulators (column sums, visual mass) are updated once per layer.
class SparseVisualAttention final : public AttentionPolicy {
 public:
  SparseVisualAttention(const SparsifyConfig& config, const ModelDims& dims);

  std::vector<AttentionResult> attend(KvCache& cache, std::size_t layer,
                                      std::span<const Vector> queries) override;

  // Closes the current token: publishes its visual mass and, in compacted
  // mode, evicts pruned rows. Call after every forward step.
  void finish_step(KvCache& cache);

  const std::vector<LayerDiagnostics>& last_step() const { return last_; }
  // Mean attention error over every layer-step processed so far.
  double mean_attention_error() const {
    return error_count_ == 0 ? 0.0 : error_sum_ / static_cast<double>(error_count_);
  }
  std::size_t peak_elements() const { return peak_elements_; }
  std::size_t early_layers() const { return early_layers_; }

 private:
  struct Budget {
    bool active = false;
    std::size_t keep = 0;
  };
  Budget budget(const KvCache& cache, const LayerCache& lc) const;
  std::vector<std::uint8_t> forced_rows(const KvCache& cache, const LayerCache& lc,
                                        std::size_t keep) const;

  SparsifyConfig config_;
  ModelDims dims_;
  std::size_t early_layers_;
  std::vector<LayerDiagnostics> current_;
  std::vector<LayerDiagnostics> last_;
  double error_sum_ = 0.0;
  std::size_t error_count_ = 0;
  std::size_t peak_elements_ = 0;
};

}  // namespace svcd
