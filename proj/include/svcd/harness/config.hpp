// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "svcd/decoding.hpp"

namespace svcd::harness {

using Json = nlohmann::ordered_json;

struct ModelConfig {
  std::string kind = "composer";  // "composer" | "transformer"
  // Transformer.
  std::uint64_t seed = 1;
  std::size_t d_model = 16;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t vocab = 64;
  std::size_t d_ff = 0;
  // Composer.
  std::size_t findings = 12;
  double a_vis = 2.0;
  double b_prior = 3.0;
  double sigma = 0.1;
  double eos_prior = 0.2;
  bool fit_prior = true;  // estimate trigger links from the corpus
};

struct GeneratorConfig {
  std::size_t findings = 12;
  std::size_t tokens_per_finding = 4;
  std::size_t min_findings = 1;
  std::size_t max_findings = 3;
  std::size_t trigger_pairs = 3;
  double prior_rate = 0.8;
  double question_rate = 1.0;
  std::size_t n = 200;
  std::uint64_t seed = 0;
};

struct AblationConfig {
  bool vats = true;
  bool vps = true;
  bool mbs = true;
  bool sac = true;
};

struct SweepConfig {
  std::string axis = "none";  // none | alpha | beta | lambda | stop_layer | sparsity
  std::vector<double> grid;
};

struct OutputConfig {
  std::string csv = "results.csv";
  std::string json = "results.json";
  std::string timing = "timing.csv";
  std::string diagnostics;  // JSON lines; empty disables
};

struct BenchConfig {
  std::size_t prefix_tokens = 2048;
  std::size_t generate = 32;
  std::size_t repeats = 5;
  double sparsity_rate = 0.5;
  std::size_t stop_layer_prefix = 256;
  std::string csv = "bench.csv";
};

struct AttnStatsConfig {
  std::size_t bins = 32;
  std::string example;  // corpus id; empty selects the first example
  std::string scores_csv = "attn_scores.csv";
  std::string visual_histogram = "attn_hist_visual.csv";
  std::string text_histogram = "attn_hist_text.csv";
};

struct ExperimentConfig {
  ModelConfig model;
  SparsifyConfig sparsify;
  DecodeConfig decode;
  AblationConfig ablation;
  GeneratorConfig generator;
  SweepConfig sweep;
  OutputConfig output;
  BenchConfig bench;
  AttnStatsConfig attn_stats;
  std::string corpus = "corpus.jsonl";
  std::vector<std::uint64_t> seeds{0};
  std::size_t max_examples = 0;  // 0: every example
  std::size_t threads = 1;

  // Sparsify/decode settings with the ablation toggles folded in.
  SparsifyConfig effective_sparsify() const;
  DecodeConfig effective_decode() const;
};

// Parses a configuration document. Unknown keys and wrong types raise
// ConfigError naming the offending field path.
ExperimentConfig parse_config(const Json& doc);
Json to_json(const ExperimentConfig& cfg);

// Reads a JSON file; DataError when it cannot be opened or parsed.
Json load_json_file(const std::string& path);

// Sets `dotted.path` in `doc` to `value`, creating objects as needed.
void set_path(Json& doc, const std::string& dotted, Json value);

const char* to_string(CacheMode m);
const char* to_string(DecodeMode m);
const char* to_string(Pooling p);
const char* to_string(SacInput s);

// Shortest round-trip decimal rendering; "nan", "inf" and "-inf" for specials.
std::string format_double(double v);

}  // namespace svcd::harness
