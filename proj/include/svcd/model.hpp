// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "svcd/kv_cache.hpp"
#include "svcd/numerics.hpp"

namespace svcd {

using TokenId = std::int32_t;

inline constexpr TokenId kBosToken = 0;
inline constexpr TokenId kEosToken = 1;

struct ModelDims {
  std::size_t layers = 0;
  std::size_t heads = 0;
  std::size_t head_dim = 0;
  std::size_t d_model = 0;
  std::size_t vocab = 0;
};

// An image reduced to the findings it depicts; each finding contributes
// `tokens_per_finding` visual tokens.
struct ImageDescriptor {
  std::vector<TokenId> findings;
  std::size_t tokens_per_finding = 1;

  std::size_t visual_token_count() const { return findings.size() * tokens_per_finding; }
};

struct VisualEmbedding {
  std::vector<Vector> embeddings;
  std::vector<TokenId> finding_of_token;  // parallel to embeddings
};

// Hook through which a model delegates attention for one layer. The model has
// already appended the current token's keys/values; the policy returns one
// result per head (output vectors feed the model's output projection).
class AttentionPolicy {
 public:
  virtual ~AttentionPolicy() = default;
  virtual std::vector<AttentionResult> attend(KvCache& cache, std::size_t layer,
                                              std::span<const Vector> queries) = 0;
};

// Plain softmax attention over the cache's current support.
class FullAttention final : public AttentionPolicy {
 public:
  std::vector<AttentionResult> attend(KvCache& cache, std::size_t layer,
                                      std::span<const Vector> queries) override;
};

struct StepOutput {
  Vector hidden;
  std::vector<std::vector<AttentionResult>> attention;  // [layer][head]
};

// How a sequence of vectors is reduced to the single input of the LM head in
// the contrastive branch.
enum class Pooling { kMean, kLast };

// The contract every scoring model implements.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::string kind() const = 0;
  virtual const ModelDims& dims() const = 0;
  // Token ids that name findings; visual descriptors may only use these.
  virtual std::span<const TokenId> finding_vocabulary() const = 0;

  virtual std::vector<Vector> embed_text(std::span<const TokenId> tokens) const = 0;
  // Throws InputError for findings outside the finding vocabulary.
  virtual VisualEmbedding embed_visual(const ImageDescriptor& image) const = 0;

  // Runs the first `layer_limit` layers (all when larger than the layer
  // count) for one new token whose row is opened by the caller via
  // cache.begin_token(). Deterministic given cache contents and input.
  virtual StepOutput forward_step(KvCache& cache, std::span<const double> input,
                                  AttentionPolicy& policy, std::size_t layer_limit) const = 0;

  StepOutput forward_step(KvCache& cache, std::span<const double> input,
                          AttentionPolicy& policy) const {
    return forward_step(cache, input, policy, dims().layers);
  }

  // The language decoding head: a pure function of its input.
  virtual Logits lm_head(std::span<const double> hidden) const = 0;

  // Whether attention rows carry meaning (false for surrogate models).
  virtual bool exposes_attention() const { return true; }
  virtual bool supports_pooling(Pooling) const { return true; }

  bool is_finding(TokenId t) const;
  KvCache make_cache() const { return KvCache(dims().layers, dims().heads, dims().head_dim); }
};

}  // namespace svcd
