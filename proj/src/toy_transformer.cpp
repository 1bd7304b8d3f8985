// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include "svcd/toy_transformer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "svcd/errors.hpp"
#include "svcd/rng.hpp"

namespace svcd {

namespace {

constexpr std::uint64_t kVisualSalt = 0x76697375616cULL;  // "visual"

Matrix random_matrix(SplitMix64& rng, std::size_t rows, std::size_t cols, double bound) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-bound, bound);
  return m;
}

Vector rms_norm(std::span<const double> x) {
  double ms = 0.0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(x.size());
  const double scale = 1.0 / std::sqrt(ms + ToyTransformer::kRmsEps);
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * scale;
  return out;
}

void fnv_mix(std::uint64_t& h, std::span<const double> values) {
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
}

}  // namespace

ToyTransformer::ToyTransformer(const ToyTransformerConfig& config) : config_(config) {
  if (config.d_model == 0 || config.layers == 0 || config.heads == 0 || config.vocab == 0) {
    throw ConfigError("ToyTransformer: dimensions must be positive");
  }
  if (config.vocab < 8) throw ConfigError("ToyTransformer: vocab must be at least 8");
  if (config.d_model % config.heads != 0) {
    throw ConfigError("ToyTransformer: d_model must be divisible by heads");
  }
  d_ff_ = config.d_ff == 0 ? 4 * config.d_model : config.d_ff;
  dims_ = ModelDims{config.layers, config.heads, config.d_model / config.heads, config.d_model,
                    config.vocab};
  for (std::size_t t = 2; t < config.vocab; ++t) findings_.push_back(static_cast<TokenId>(t));

  const std::size_t d = config.d_model;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  SplitMix64 rng(config.seed);
  layers_.resize(config.layers);
  for (LayerWeights& lw : layers_) {
    for (auto* group : {&lw.wq, &lw.wk, &lw.wv}) {
      for (std::size_t h = 0; h < config.heads; ++h) {
        group->push_back(random_matrix(rng, dims_.head_dim, d, bound));
      }
    }
    lw.wo = random_matrix(rng, d, d, bound);
    lw.w1 = random_matrix(rng, d_ff_, d, bound);
    lw.w2 = random_matrix(rng, d, d_ff_, bound);
  }
  embedding_ = random_matrix(rng, config.vocab, d, bound);
  unembedding_ = random_matrix(rng, config.vocab, d, bound);
}

std::vector<Vector> ToyTransformer::embed_text(std::span<const TokenId> tokens) const {
  std::vector<Vector> out;
  out.reserve(tokens.size());
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= dims_.vocab) {
      throw InputError("ToyTransformer::embed_text: token " + std::to_string(t) + " out of vocab");
    }
    auto row = embedding_.row(static_cast<std::size_t>(t));
    out.emplace_back(row.begin(), row.end());
  }
  return out;
}

Vector ToyTransformer::visual_base(TokenId finding) const {
  SplitMix64 rng(derive_seed(config_.seed ^ kVisualSalt, static_cast<std::uint64_t>(finding)));
  const double bound = 1.0 / std::sqrt(static_cast<double>(dims_.d_model));
  Vector v(dims_.d_model);
  for (double& x : v) x = rng.uniform(-bound, bound);
  return v;
}

VisualEmbedding ToyTransformer::embed_visual(const ImageDescriptor& image) const {
  if (image.findings.empty() || image.tokens_per_finding == 0) {
    throw InputError("embed_visual: image descriptor must be non-empty");
  }
  VisualEmbedding out;
  for (TokenId f : image.findings) {
    if (!is_finding(f)) {
      throw InputError("embed_visual: finding " + std::to_string(f) + " outside vocabulary");
    }
    const Vector base = visual_base(f);
    for (std::size_t r = 0; r < image.tokens_per_finding; ++r) {
      out.embeddings.push_back(base);
      out.finding_of_token.push_back(f);
    }
  }
  return out;
}

StepOutput ToyTransformer::forward_step(KvCache& cache, std::span<const double> input,
                                        AttentionPolicy& policy, std::size_t layer_limit) const {
  if (input.size() != dims_.d_model) {
    throw ContractViolation("forward_step: input dim != d_model");
  }
  if (cache.layers() != dims_.layers || cache.heads() != dims_.heads ||
      cache.head_dim() != dims_.head_dim) {
    throw ContractViolation("forward_step: cache shape does not match model");
  }
  const std::size_t n_layers = std::min(layer_limit, dims_.layers);
  StepOutput out;
  Vector x(input.begin(), input.end());
  std::vector<Vector> q(dims_.heads), k(dims_.heads), v(dims_.heads);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const LayerWeights& lw = layers_[l];
    const Vector xn = rms_norm(x);
    for (std::size_t h = 0; h < dims_.heads; ++h) {
      q[h] = matvec(lw.wq[h], xn);
      k[h] = matvec(lw.wk[h], xn);
      v[h] = matvec(lw.wv[h], xn);
    }
    cache.append(l, k, v);
    std::vector<AttentionResult> heads = policy.attend(cache, l, q);
    Vector concat;
    concat.reserve(dims_.d_model);
    for (const AttentionResult& r : heads) concat.insert(concat.end(), r.output.begin(), r.output.end());
    const Vector o = matvec(lw.wo, concat);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += o[i];

    Vector hidden = matvec(lw.w1, rms_norm(x));
    for (double& a : hidden) a = a > 0.0 ? a : 0.0;
    const Vector f = matvec(lw.w2, hidden);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += f[i];
    out.attention.push_back(std::move(heads));
  }
  out.hidden = std::move(x);
  return out;
}

Logits ToyTransformer::lm_head(std::span<const double> hidden) const {
  if (hidden.size() != dims_.d_model) {
    throw ContractViolation("lm_head: input dim " + std::to_string(hidden.size()) +
                            " != d_model " + std::to_string(dims_.d_model));
  }
  return matvec(unembedding_, hidden);
}

std::uint64_t ToyTransformer::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const LayerWeights& lw : layers_) {
    for (const auto* group : {&lw.wq, &lw.wk, &lw.wv}) {
      for (const Matrix& m : *group) fnv_mix(h, m.data());
    }
    fnv_mix(h, lw.wo.data());
    fnv_mix(h, lw.w1.data());
    fnv_mix(h, lw.w2.data());
  }
  fnv_mix(h, embedding_.data());
  fnv_mix(h, unembedding_.data());
  return h;
}

}  // namespace svcd
