// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "support.hpp"
#include "svcd/composer.hpp"
#include "svcd/decoding.hpp"
#include "svcd/errors.hpp"
#include "svcd/toy_transformer.hpp"

using namespace svcd;

namespace {

ToyTransformerConfig small(std::uint64_t seed) { return ToyTransformerConfig{seed, 16, 2, 2, 64, 0}; }

ComposerConfig quiet_composer() {
  ComposerConfig c;
  c.sigma = 0.0;
  c.prior.base.assign(c.findings, 0.0);
  c.prior.links.assign(c.findings, std::vector<double>(c.findings, 0.0));
  c.prior.base[4] = 0.6;  // finding id 6 is the most likely a priori
  c.prior.base[1] = 0.3;
  return c;
}

}  // namespace

TEST_SUITE("toy-model") {
  TEST_CASE("transformer weights are seed-determined") {
    const ToyTransformer a(small(1)), b(small(1)), c(small(2));
    CHECK(a.checksum() == b.checksum());
    CHECK(a.checksum() != c.checksum());
  }

  TEST_CASE("transformer weights lie in the configured range") {
    const ToyTransformer m(small(9));
    const double bound = 1.0 / std::sqrt(16.0);
    for (double v : m.embedding().data()) CHECK(std::fabs(v) <= bound);
    for (double v : m.layer_weights()[1].w2.data()) CHECK(std::fabs(v) <= bound);
  }

  TEST_CASE("invalid dimensions are configuration errors") {
    CHECK_THROWS_AS(ToyTransformer(ToyTransformerConfig{1, 0, 2, 2, 64, 0}), ConfigError);
    CHECK_THROWS_AS(ToyTransformer(ToyTransformerConfig{1, 16, 0, 2, 64, 0}), ConfigError);
    CHECK_THROWS_AS(ToyTransformer(ToyTransformerConfig{1, 16, 2, 2, 7, 0}), ConfigError);
    CHECK_THROWS_AS(ToyTransformer(ToyTransformerConfig{1, 16, 2, 3, 64, 0}), ConfigError);
  }

  TEST_CASE("first forward step attends to its own key only") {
    const ToyTransformer m(small(1));
    KvCache cache = m.make_cache();
    FullAttention full;
    const TokenId bos[] = {kBosToken};
    cache.begin_token(false);
    const StepOutput out = m.forward_step(cache, m.embed_text(bos)[0], full);
    REQUIRE(out.attention.size() == 2);
    for (const auto& layer : out.attention) {
      for (const AttentionResult& r : layer) CHECK(r.probs == Vector{1.0});
    }
  }

  TEST_CASE("attention rows over the causal prefix are distributions") {
    const ToyTransformer m(small(4));
    KvCache cache = m.make_cache();
    FullAttention full;
    const std::vector<TokenId> tokens{0, 5, 9, 13, 2, 40, 41};
    const auto emb = m.embed_text(tokens);
    for (std::size_t t = 0; t < emb.size(); ++t) {
      cache.begin_token(false);
      const StepOutput out = m.forward_step(cache, emb[t], full);
      cache.finish_token();
      for (const auto& layer : out.attention) {
        for (const AttentionResult& r : layer) {
          CHECK(r.probs.size() == t + 1);
          for (double p : r.probs) CHECK(p >= 0.0);
          CHECK(std::fabs(sum(r.probs) - 1.0) <= 1e-9);
        }
      }
    }
  }

  TEST_CASE("forward step is deterministic") {
    const ToyTransformer m(small(3));
    FullAttention full;
    auto run = [&] {
      KvCache cache = m.make_cache();
      Vector h;
      const std::vector<TokenId> tokens{0, 7, 8};
      for (const Vector& e : m.embed_text(tokens)) {
        cache.begin_token(false);
        h = m.forward_step(cache, e, full).hidden;
        cache.finish_token();
      }
      return h;
    };
    CHECK(run() == run());
  }

  TEST_CASE("visual embeddings") {
    const ToyTransformer m(small(1));
    const VisualEmbedding one = m.embed_visual(ImageDescriptor{{5}, 2});
    REQUIRE(one.embeddings.size() == 2);
    CHECK(one.embeddings[0] == one.embeddings[1]);
    CHECK(m.embed_visual(ImageDescriptor{{5}, 2}).embeddings == one.embeddings);
    CHECK_THROWS_AS(m.embed_visual(ImageDescriptor{{64}, 1}), InputError);
    CHECK_THROWS_AS(m.embed_visual(ImageDescriptor{{1}, 1}), InputError);
    CHECK_THROWS_AS(m.embed_visual(ImageDescriptor{{}, 1}), InputError);
  }

  TEST_CASE("disjoint images share no visual embedding") {
    const ToyTransformer m(small(1));
    std::vector<Vector> bases;
    for (TokenId f : m.finding_vocabulary()) bases.push_back(m.visual_base(f));
    for (std::size_t i = 0; i < bases.size(); ++i) {
      for (std::size_t j = i + 1; j < bases.size(); ++j) CHECK(bases[i] != bases[j]);
    }
  }

  TEST_CASE("lm head is linear") {
    const ToyTransformer m(small(1));
    CHECK(m.lm_head(Vector(16, 0.0)) == Vector(64, 0.0));
    SplitMix64 rng(2);
    const Vector e = test::random_vector(rng, 16);
    Vector e2 = e;
    for (double& v : e2) v *= 2.0;
    const Vector a = m.lm_head(e), b = m.lm_head(e2);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] == 2.0 * a[i]);
    CHECK_THROWS_AS(m.lm_head(Vector(15, 0.0)), ContractViolation);
  }

  TEST_CASE("composer without visual evidence follows its prior") {
    const PlantedPriorComposer c(quiet_composer());
    const std::vector<TokenId> prompt{kBosToken};
    const Logits phi = contrastive_logits(c, c.embed_text(prompt), {}, {}, 0, Pooling::kMean);
    const Logits prior = c.prior_logits(std::vector<bool>(12, false));
    CHECK(argmax(phi) == argmax(prior));
    CHECK(argmax(phi) == 6);
  }

  TEST_CASE("composer finding logit grows with visible fraction") {
    const PlantedPriorComposer c(quiet_composer());
    const std::vector<TokenId> prompt{kBosToken};
    const VisualEmbedding v = c.embed_visual(ImageDescriptor{{3, 9}, 4});
    double previous = -1e300;
    // Keep k of finding 3's four tokens plus every token of finding 9.
    for (std::size_t k = 0; k <= 4; ++k) {
      std::vector<Vector> kept(v.embeddings.begin() + 4, v.embeddings.end());
      for (std::size_t i = 0; i < k; ++i) kept.push_back(v.embeddings[i]);
      const Logits l = contrastive_logits(c, c.embed_text(prompt), kept, {}, 0, Pooling::kMean);
      CHECK(l[3] > previous);
      previous = l[3];
    }
  }

  TEST_CASE("composer decoder path equals the pooled shortcut") {
    ComposerConfig cfg = quiet_composer();
    cfg.sigma = 0.1;
    cfg.noise_seed = 77;
    const PlantedPriorComposer c(cfg);
    const std::vector<TokenId> prompt{kBosToken};
    const VisualEmbedding v = c.embed_visual(ImageDescriptor{{3, 9}, 4});
    const auto text = c.embed_text(prompt);
    const TokenId hist[] = {9};
    const auto history = c.embed_text(hist);
    const std::vector<Vector> seq = assemble_sequence(text, v.embeddings, history);
    KvCache cache = c.make_cache();
    FullAttention full;
    Vector h;
    for (const Vector& e : seq) {
      cache.begin_token(false);
      h = c.forward_step(cache, e, full).hidden;
      cache.finish_token();
    }
    const Logits shortcut = contrastive_logits(c, text, v.embeddings, history, 0, Pooling::kMean);
    const Logits direct = c.lm_head(h);
    for (std::size_t i = 0; i < direct.size(); ++i) {
      CHECK(direct[i] == doctest::Approx(shortcut[i]).epsilon(1e-12));
    }
    CHECK(direct[9] == PlantedPriorComposer::kSuppressed + 0.0);
  }

  TEST_CASE("composer rejects unknown findings and last pooling") {
    const PlantedPriorComposer c(quiet_composer());
    CHECK_THROWS_AS(c.embed_visual(ImageDescriptor{{14}, 1}), InputError);
    CHECK_FALSE(c.supports_pooling(Pooling::kLast));
    CHECK_FALSE(c.exposes_attention());
  }
}
