// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "svcd/harness/corpus.hpp"
#include "svcd/metrics.hpp"

namespace svcd::harness {

// One (configuration, seed) cell of an experiment.
struct ResultRow {
  std::string axis = "none";
  double axis_value = 0.0;
  std::uint64_t seed = 0;
  ExperimentConfig config;  // ablations already folded in

  std::size_t examples = 0;
  std::size_t questions = 0;
  std::size_t empty_generations = 0;
  double chair = 0.0;            // mean over examples
  double recall = 0.0;           // mean over examples
  double accuracy = 0.0;         // closed-ended; nan without questions
  double attention_error = 0.0;  // mean over examples
  std::size_t peak_elements = 0;
  std::size_t tokens = 0;
  std::string status = "ok";
  std::string error;

  // Not deterministic; written to the timing file only.
  metrics::RunTiming timing;
};

// Everything a row needs that is shared across jobs.
struct ExperimentData {
  std::vector<CorpusExample> corpus;
  PlantedPrior prior;  // composer only
};

ExperimentData load_experiment_data(const ExperimentConfig& cfg);

// Model used for example `index` under `seed`. The composer's noise stream is
// keyed per example; the transformer ignores both.
std::unique_ptr<Model> build_model(const ModelConfig& model, const PlantedPrior& prior,
                                   std::uint64_t seed, std::size_t index);

std::uint64_t example_decode_seed(std::uint64_t seed, std::size_t index);

// Sets the swept hyperparameter. ConfigError for an unknown axis or a value
// the axis cannot take.
void apply_axis(ExperimentConfig& cfg, const std::string& axis, double value);

// Decodes every example for one (config, seed) cell. Never throws for decode
// failures: they mark the row as an error. Diagnostics lines are appended
// when `diagnostics` is non-null.
ResultRow run_row(const ExperimentConfig& cfg, const ExperimentData& data, const std::string& axis,
                  double axis_value, std::uint64_t seed, std::vector<std::string>* diagnostics);

// Runs `grid` x seeds, concurrently over cfg.threads workers; rows come back
// sorted by (axis value, seed).
std::vector<ResultRow> sweep(const ExperimentConfig& cfg, const ExperimentData& data,
                             const std::string& axis, const std::vector<double>& grid,
                             std::vector<std::string>* diagnostics = nullptr);

std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, const ExperimentData& data,
                                      std::vector<std::string>* diagnostics = nullptr);

Json diagnostics_json(const DecodeResult& result);

std::vector<std::string> csv_header(const ResultRow& sample);
void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows);
void write_results_json(const std::string& path, const std::vector<ResultRow>& rows);
void write_timing_csv(const std::string& path, const std::vector<ResultRow>& rows);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

std::string csv_escape(const std::string& field);

}  // namespace svcd::harness
