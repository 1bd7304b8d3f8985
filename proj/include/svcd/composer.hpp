// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "svcd/model.hpp"

namespace svcd {

// Language prior of the composer. Indices are finding indices (token id - 2).
struct PlantedPrior {
  std::vector<double> base;                 // unconditional prior per finding
  std::vector<std::vector<double>> links;   // links[t][y]: rate y follows trigger t
  double eos = 0.2;                         // prior mass on ending the report
};

struct ComposerConfig {
  std::size_t findings = 12;  // finding token ids are 2 .. findings + 1
  double a_vis = 2.0;
  double b_prior = 3.0;
  double sigma = 0.1;
  std::uint64_t noise_seed = 0;
  PlantedPrior prior;  // empty tables mean "all zero"
};

// Surrogate model whose logits add visual evidence to a language prior:
//
//   logit(y)   = a_vis * frac_visible(y) + b_prior * prior(y | emitted) + noise
//   logit(EOS) = a_vis * coverage        + b_prior * prior.eos           + noise
//
// frac_visible(y) is the fraction of y's visual tokens present in the input;
// coverage is the fraction of all visual tokens that are present and depict an
// already-emitted finding. prior(y | emitted) = max(base[y], max_t links[t][y])
// over emitted findings t. Emitted findings and BOS get a large finite penalty.
// Noise depends on (noise_seed, emitted set, token) only, so masking visual
// tokens leaves it unchanged.
//
// Inputs are encoded so that mean pooling preserves all counts: channel 0
// marks BOS (its mean is 1/n), then per finding a visible-fraction channel,
// a coverage channel, and an emitted channel. The decoder path keeps a running
// mean of its inputs, so forward_step + lm_head equals lm_head of the mean of
// every input; attention is degenerate (zero keys, uniform rows).
class PlantedPriorComposer final : public Model {
 public:
  static constexpr double kSuppressed = -1.0e4;

  explicit PlantedPriorComposer(ComposerConfig config);

  std::string kind() const override { return "composer"; }
  const ModelDims& dims() const override { return dims_; }
  std::span<const TokenId> finding_vocabulary() const override { return findings_; }

  std::vector<Vector> embed_text(std::span<const TokenId> tokens) const override;
  VisualEmbedding embed_visual(const ImageDescriptor& image) const override;
  StepOutput forward_step(KvCache& cache, std::span<const double> input, AttentionPolicy& policy,
                          std::size_t layer_limit) const override;
  using Model::forward_step;
  Logits lm_head(std::span<const double> pooled) const override;

  bool exposes_attention() const override { return false; }
  bool supports_pooling(Pooling p) const override { return p == Pooling::kMean; }

  // b_prior * prior(. | emitted) over the whole vocabulary, without visual
  // evidence or noise. Emitted findings and BOS are suppressed.
  Logits prior_logits(const std::vector<bool>& emitted) const;

  const ComposerConfig& config() const { return config_; }
  std::size_t finding_index(TokenId t) const { return static_cast<std::size_t>(t - 2); }

 private:
  double prior_of(std::size_t y, const std::vector<bool>& emitted) const;
  double noise(std::uint64_t emitted_mask, std::size_t token) const;

  ComposerConfig config_;
  ModelDims dims_;
  std::vector<TokenId> findings_;
};

}  // namespace svcd
