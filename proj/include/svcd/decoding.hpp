// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Sparse visual contrastive decoding: the primary branch runs the model with
// calibrated sparse attention; the contrastive branch feeds embeddings with
// stochastically masked visual tokens straight into the LM head (or through
// the first stop_layer layers); the two are fused under an adaptive
// plausibility constraint.

#include <cstdint>
#include <functional>
#include <vector>

#include "svcd/model.hpp"
#include "svcd/sparse_attention.hpp"

namespace svcd {

enum class DecodeMode { kGreedy, kBeam };

struct DecodeConfig {
  double alpha = 0.3;
  double gamma_apc = 0.1;
  double visual_mask_rate = 0.5;
  std::size_t stop_layer = 0;
  std::size_t beam_size = 2;
  std::size_t max_len = 1024;
  std::uint64_t seed = 0;
  DecodeMode mode = DecodeMode::kBeam;
  Pooling pooling = Pooling::kMean;
  bool mbs = true;  // off: the contrastive branch keeps every visual token
  bool ignore_eos = false;  // EOS is never emitted; for fixed-length timing runs

  void validate() const;
};

// Indices of the visual tokens kept for the contrastive branch. Each token is
// dropped independently with probability `rate`; if all are dropped one
// survivor is drawn uniformly.
std::vector<std::size_t> mask_visual(std::size_t count, double rate, std::uint64_t seed);

// Input order shared by both branches: text[0], visual..., text[1..], history...
std::vector<Vector> assemble_sequence(std::span<const Vector> text, std::span<const Vector> visual,
                                      std::span<const Vector> history);

// Contrastive logits: pools the embeddings of (text, visual, history) and
// applies the LM head. stop_layer > 0 first runs that many decoder layers
// over the sequence with a throwaway cache and pools the hidden states.
Logits contrastive_logits(const Model& model, std::span<const Vector> text,
                          std::span<const Vector> visual, std::span<const Vector> history,
                          std::size_t stop_layer, Pooling pooling);

Vector pool(std::span<const Vector> vectors, Pooling pooling);

// {y : p(y) >= gamma * max_w p(w)}, ascending token ids.
std::vector<TokenId> plausible_set(std::span<const double> probs, double gamma);

// (alpha + 1) theta - alpha phi on the plausible set, -inf elsewhere.
Logits fuse(std::span<const double> logit_theta, std::span<const double> logit_phi, double alpha,
            std::span<const TokenId> plausible);

struct FusedStep {
  Logits logit_theta;
  Logits logit_phi;  // empty when alpha == 0
  Vector p_theta;
  std::vector<TokenId> plausible;
  Logits fused;
};

struct EmittedToken {
  std::size_t beam = 0;  // parent beam
  TokenId token = 0;
  double p_theta = 0.0;
  double p_theta_max = 0.0;
  double fused = 0.0;
  double score = 0.0;    // accumulated beam score (greedy: fused log-prob sum)
};

struct StepDiagnostics {
  std::size_t step = 0;
  std::vector<LayerDiagnostics> layers;  // primary branch of the first beam
  TokenId theta_argmax = 0;
  std::size_t plausible_size = 0;
  std::vector<EmittedToken> emitted;
  // Beam mode: lowest kept and highest discarded candidate score.
  double beam_min_kept = 0.0;
  double beam_max_pruned = kNegInf;
  double elapsed_us = 0.0;
};

struct DecodeResult {
  std::vector<TokenId> tokens;  // excludes EOS
  std::vector<StepDiagnostics> steps;
  double score = 0.0;
  std::size_t prefill_tokens = 0;
  std::size_t peak_elements = 0;
  double mean_attention_error = 0.0;
  bool hit_eos = false;
};

// Called after every primary-branch forward step of the first beam.
using ForwardObserver = std::function<void(const KvCache&, const StepOutput&)>;

// Validates the configuration against the model; throws ConfigError.
void validate_decode(const Model& model, std::span<const TokenId> prompt, const DecodeConfig& decode,
                     const SparsifyConfig& sparsify);

DecodeResult decode(const Model& model, const ImageDescriptor& image,
                    std::span<const TokenId> prompt, const DecodeConfig& decode,
                    const SparsifyConfig& sparsify, const ForwardObserver& observer = {});

}  // namespace svcd
