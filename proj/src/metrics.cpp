// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include "svcd/metrics.hpp"

#include <algorithm>
#include <chrono>

#include "svcd/errors.hpp"

namespace svcd::metrics {

namespace {

std::vector<TokenId> as_set(std::span<const TokenId> xs) {
  std::vector<TokenId> s(xs.begin(), xs.end());
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

std::size_t intersection_size(const std::vector<TokenId>& a, const std::vector<TokenId>& b) {
  std::vector<TokenId> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out.size();
}

}  // namespace

std::vector<TokenId> extract_findings(const Model& model, std::span<const TokenId> tokens) {
  std::vector<TokenId> found;
  for (TokenId t : tokens) {
    if (model.is_finding(t)) found.push_back(t);
  }
  return as_set(found);
}

ChairResult chair(std::span<const TokenId> generated, std::span<const TokenId> reference) {
  const std::vector<TokenId> g = as_set(generated);
  if (g.empty()) return {0.0, true};
  const std::vector<TokenId> s = as_set(reference);
  const std::size_t hallucinated = g.size() - intersection_size(g, s);
  return {static_cast<double>(hallucinated) / static_cast<double>(g.size()), false};
}

double recall(std::span<const TokenId> generated, std::span<const TokenId> reference) {
  const std::vector<TokenId> s = as_set(reference);
  if (s.empty()) throw InputError("recall: empty reference set");
  const std::vector<TokenId> g = as_set(generated);
  return static_cast<double>(intersection_size(g, s)) / static_cast<double>(s.size());
}

double closed_ended_accuracy(std::span<const std::string> predictions,
                             std::span<const std::string> labels) {
  if (predictions.size() != labels.size()) {
    throw InputError("closed_ended_accuracy: prediction and label counts differ");
  }
  if (predictions.empty()) throw InputError("closed_ended_accuracy: no predictions");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

RunTiming measure_run(const std::function<DecodeResult()>& run) {
  const auto start = std::chrono::steady_clock::now();
  const DecodeResult result = run();
  const auto stop = std::chrono::steady_clock::now();
  RunTiming t;
  t.wall_seconds = std::chrono::duration<double>(stop - start).count();
  t.tokens = result.tokens.size();
  t.tokens_per_second = t.tokens == 0 || t.wall_seconds <= 0.0
                            ? 0.0
                            : static_cast<double>(t.tokens) / t.wall_seconds;
  t.peak_elements = result.peak_elements;
  return t;
}

double median(std::vector<double> sample) {
  if (sample.empty()) throw InputError("median: empty sample");
  std::sort(sample.begin(), sample.end());
  const std::size_t n = sample.size();
  return n % 2 == 1 ? sample[n / 2] : 0.5 * (sample[n / 2 - 1] + sample[n / 2]);
}

}  // namespace svcd::metrics
