// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "svcd/model.hpp"

namespace svcd {

struct ToyTransformerConfig {
  std::uint64_t seed = 1;
  std::size_t d_model = 16;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t vocab = 64;
  std::size_t d_ff = 0;  // 0 selects 4 * d_model
};

// Deterministic pre-norm residual transformer with fixed RMS normalization
// and a ReLU feed-forward block. Every weight is drawn from SplitMix64(seed)
// as uniform(-1/sqrt(d_model), +1/sqrt(d_model)), in a fixed order:
// per layer W_q, W_k, W_v (per head), W_o, W_1, W_2; then E and U.
class ToyTransformer final : public Model {
 public:
  static constexpr double kRmsEps = 1e-6;

  struct LayerWeights {
    std::vector<Matrix> wq;  // per head, head_dim x d_model
    std::vector<Matrix> wk;
    std::vector<Matrix> wv;
    Matrix wo;  // d_model x d_model
    Matrix w1;  // d_ff x d_model
    Matrix w2;  // d_model x d_ff
  };

  explicit ToyTransformer(const ToyTransformerConfig& config);

  std::string kind() const override { return "transformer"; }
  const ModelDims& dims() const override { return dims_; }
  std::span<const TokenId> finding_vocabulary() const override { return findings_; }

  std::vector<Vector> embed_text(std::span<const TokenId> tokens) const override;
  VisualEmbedding embed_visual(const ImageDescriptor& image) const override;
  StepOutput forward_step(KvCache& cache, std::span<const double> input, AttentionPolicy& policy,
                          std::size_t layer_limit) const override;
  using Model::forward_step;
  Logits lm_head(std::span<const double> hidden) const override;

  const ToyTransformerConfig& config() const { return config_; }
  const std::vector<LayerWeights>& layer_weights() const { return layers_; }
  const Matrix& embedding() const { return embedding_; }      // vocab x d_model
  const Matrix& unembedding() const { return unembedding_; }  // vocab x d_model
  // Base embedding shared by every visual token depicting `finding`.
  Vector visual_base(TokenId finding) const;

  // FNV-1a over the bit patterns of all weights, in generation order.
  std::uint64_t checksum() const;

 private:
  ToyTransformerConfig config_;
  ModelDims dims_;
  std::size_t d_ff_;
  std::vector<TokenId> findings_;
  std::vector<LayerWeights> layers_;
  Matrix embedding_;
  Matrix unembedding_;
};

}  // namespace svcd
