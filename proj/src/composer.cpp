// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include "svcd/composer.hpp"

#include <string>

#include "svcd/errors.hpp"
#include "svcd/rng.hpp"

namespace svcd {

PlantedPriorComposer::PlantedPriorComposer(ComposerConfig config) : config_(std::move(config)) {
  const std::size_t nf = config_.findings;
  if (nf < 1 || nf > 62) throw ConfigError("composer: finding count must be in [1, 62]");
  if (config_.sigma < 0.0) throw ConfigError("composer: sigma must be non-negative");
  PlantedPrior& p = config_.prior;
  if (p.base.empty()) p.base.assign(nf, 0.0);
  if (p.links.empty()) p.links.assign(nf, std::vector<double>(nf, 0.0));
  if (p.base.size() != nf || p.links.size() != nf) {
    throw ConfigError("composer: prior tables must cover every finding");
  }
  for (const auto& row : p.links) {
    if (row.size() != nf) throw ConfigError("composer: prior link table must be square");
  }
  dims_ = ModelDims{1, 1, 1, 1 + 3 * nf, 2 + nf};
  for (std::size_t i = 0; i < nf; ++i) findings_.push_back(static_cast<TokenId>(i + 2));
}

std::vector<Vector> PlantedPriorComposer::embed_text(std::span<const TokenId> tokens) const {
  const std::size_t nf = config_.findings;
  std::vector<Vector> out;
  out.reserve(tokens.size());
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= dims_.vocab) {
      throw InputError("composer::embed_text: token " + std::to_string(t) + " out of vocab");
    }
    Vector e(dims_.d_model, 0.0);
    if (t == kBosToken) {
      e[0] = 1.0;
    } else if (t != kEosToken) {
      e[1 + 2 * nf + finding_index(t)] = 1.0;
    }
    out.push_back(std::move(e));
  }
  return out;
}

VisualEmbedding PlantedPriorComposer::embed_visual(const ImageDescriptor& image) const {
  if (image.findings.empty() || image.tokens_per_finding == 0) {
    throw InputError("embed_visual: image descriptor must be non-empty");
  }
  const std::size_t nf = config_.findings;
  const double per_finding = 1.0 / static_cast<double>(image.tokens_per_finding);
  const double per_image = 1.0 / static_cast<double>(image.visual_token_count());
  VisualEmbedding out;
  for (TokenId f : image.findings) {
    if (!is_finding(f)) {
      throw InputError("embed_visual: finding " + std::to_string(f) + " outside vocabulary");
    }
    Vector e(dims_.d_model, 0.0);
    e[1 + finding_index(f)] = per_finding;
    e[1 + nf + finding_index(f)] = per_image;
    for (std::size_t r = 0; r < image.tokens_per_finding; ++r) {
      out.embeddings.push_back(e);
      out.finding_of_token.push_back(f);
    }
  }
  return out;
}

StepOutput PlantedPriorComposer::forward_step(KvCache& cache, std::span<const double> input,
                                              AttentionPolicy& policy,
                                              std::size_t layer_limit) const {
  if (input.size() != dims_.d_model) throw ContractViolation("composer: input dim != d_model");
  StepOutput out;
  if (layer_limit == 0) {
    out.hidden.assign(input.begin(), input.end());
    return out;
  }
  // model_state = [running sum (d_model), count]
  Vector& state = cache.model_state();
  if (state.empty()) state.assign(dims_.d_model + 1, 0.0);
  for (std::size_t i = 0; i < dims_.d_model; ++i) state[i] += input[i];
  state[dims_.d_model] += 1.0;

  const std::vector<Vector> zero(1, Vector{0.0});
  cache.append(0, zero, zero);
  out.attention.push_back(policy.attend(cache, 0, zero));

  out.hidden.resize(dims_.d_model);
  const double count = state[dims_.d_model];
  for (std::size_t i = 0; i < dims_.d_model; ++i) out.hidden[i] = state[i] / count;
  return out;
}

double PlantedPriorComposer::prior_of(std::size_t y, const std::vector<bool>& emitted) const {
  const PlantedPrior& p = config_.prior;
  double prior = p.base[y];
  for (std::size_t t = 0; t < emitted.size(); ++t) {
    if (emitted[t] && p.links[t][y] > prior) prior = p.links[t][y];
  }
  return prior;
}

double PlantedPriorComposer::noise(std::uint64_t emitted_mask, std::size_t token) const {
  if (config_.sigma == 0.0) return 0.0;
  SplitMix64 rng(derive_seed(derive_seed(config_.noise_seed, emitted_mask), token));
  return config_.sigma * rng.normal();
}

Logits PlantedPriorComposer::prior_logits(const std::vector<bool>& emitted) const {
  const std::size_t nf = config_.findings;
  if (emitted.size() != nf) throw ContractViolation("composer: emitted flags must cover findings");
  Logits out(dims_.vocab, kSuppressed);
  out[kEosToken] = config_.b_prior * config_.prior.eos;
  for (std::size_t y = 0; y < nf; ++y) {
    if (!emitted[y]) out[2 + y] = config_.b_prior * prior_of(y, emitted);
  }
  return out;
}

Logits PlantedPriorComposer::lm_head(std::span<const double> pooled) const {
  if (pooled.size() != dims_.d_model) {
    throw ContractViolation("composer::lm_head: input dim != d_model");
  }
  if (!(pooled[0] > 0.0)) {
    throw ContractViolation("composer::lm_head: input must be a mean including BOS");
  }
  const std::size_t nf = config_.findings;
  const double n = 1.0 / pooled[0];
  std::vector<bool> emitted(nf);
  std::uint64_t mask = 0;
  for (std::size_t y = 0; y < nf; ++y) {
    emitted[y] = pooled[1 + 2 * nf + y] * n > 0.5;
    if (emitted[y]) mask |= std::uint64_t{1} << y;
  }
  Logits out = prior_logits(emitted);
  double coverage = 0.0;
  for (std::size_t y = 0; y < nf; ++y) {
    if (emitted[y]) {
      coverage += pooled[1 + nf + y] * n;
    } else {
      out[2 + y] += config_.a_vis * (pooled[1 + y] * n) + noise(mask, 2 + y);
    }
  }
  out[kEosToken] += config_.a_vis * coverage + noise(mask, kEosToken);
  return out;
}

}  // namespace svcd
