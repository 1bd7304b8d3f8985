// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "svcd/harness/experiment.hpp"

namespace svcd::harness {

struct BenchSample {
  std::string section;  // "sparse_vs_full" | "stop_layer"
  std::string setting;  // "full", "sparse", or the stop layer
  std::size_t repeat = 0;
  metrics::RunTiming timing;
};

struct BenchResult {
  std::size_t prefix_tokens = 0;
  double full_median_seconds = 0.0;
  double sparse_median_seconds = 0.0;
  std::vector<double> stop_layer_median_tps;  // index = stop layer
  std::vector<BenchSample> samples;
};

// Paired timing runs on the transformer described by cfg.model: full versus
// compacted sparse decoding over a visual prefix, then contrastive decoding
// for every stop layer 0..layers. Runs are interleaved to share drift.
BenchResult bench(const ExperimentConfig& cfg);
void write_bench_csv(const std::string& path, const BenchResult& result);

// Image with at least `tokens` visual tokens spread over the model's first
// findings.
ImageDescriptor prefix_image(const Model& model, std::size_t tokens);

struct ScoreRecord {
  std::size_t record = 0;  // forward step index, prefill included
  std::vector<std::int64_t> positions;
  std::vector<bool> visual;
  Vector scores;  // per cached token: attention mass averaged over layers and heads
};

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double fraction = 0.0;
};

// min(bins, values) equal-width bins over [min, max]; a single bin when the
// range is degenerate. Empty input gives no bins.
std::vector<HistogramBin> histogram(const std::vector<double>& values, std::size_t bins);

struct AttentionStats {
  std::vector<ScoreRecord> records;
  std::vector<HistogramBin> visual;
  std::vector<HistogramBin> text;
};

// Dense-attention statistics for one corpus example. Refuses models whose
// attention carries no meaning.
AttentionStats attention_stats(const ExperimentConfig& cfg, const CorpusExample& example);
void write_attention_stats(const AttnStatsConfig& out, const AttentionStats& stats);

}  // namespace svcd::harness
