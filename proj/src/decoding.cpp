// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include "svcd/decoding.hpp"

#include <algorithm>
#include <chrono>
#include <string>

#include "svcd/errors.hpp"
#include "svcd/rng.hpp"

namespace svcd {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void drop_eos(FusedStep& fs) {
  std::erase(fs.plausible, kEosToken);
  if (!fs.plausible.empty()) return;
  std::size_t best = kEosToken == 0 ? 1 : 0;
  for (std::size_t y = 0; y < fs.p_theta.size(); ++y) {
    if (static_cast<TokenId>(y) != kEosToken && fs.p_theta[y] > fs.p_theta[best]) best = y;
  }
  fs.plausible.push_back(static_cast<TokenId>(best));
}

struct Beam {
  KvCache cache;
  SparseVisualAttention policy;
  std::vector<TokenId> tokens;
  std::vector<Vector> history;
  Vector hidden;
  double score = 0.0;
  bool finished = false;
  bool hit_eos = false;
};

struct Session {
  const Model& model;
  const DecodeConfig& decode;
  std::vector<Vector> text;
  VisualEmbedding visual;
  const ForwardObserver& observer;

  FusedStep score(const Beam& beam, std::size_t step) const {
    FusedStep fs;
    fs.logit_theta = model.lm_head(beam.hidden);
    fs.p_theta = stable_softmax(fs.logit_theta);
    fs.plausible = plausible_set(fs.p_theta, decode.gamma_apc);
    if (decode.ignore_eos) drop_eos(fs);
    if (decode.alpha != 0.0) {
      const double rate = decode.mbs ? decode.visual_mask_rate : 0.0;
      const std::vector<std::size_t> keep =
          mask_visual(visual.embeddings.size(), rate, derive_seed(decode.seed, step));
      std::vector<Vector> kept;
      kept.reserve(keep.size());
      for (std::size_t i : keep) kept.push_back(visual.embeddings[i]);
      fs.logit_phi =
          contrastive_logits(model, text, kept, beam.history, decode.stop_layer, decode.pooling);
      fs.fused = fuse(fs.logit_theta, fs.logit_phi, decode.alpha, fs.plausible);
    } else {
      fs.fused = fuse(fs.logit_theta, fs.logit_theta, 0.0, fs.plausible);
    }
    return fs;
  }

  void forward(Beam& beam, std::span<const double> input, bool visual, bool observe) const {
    beam.cache.begin_token(visual);
    StepOutput out = model.forward_step(beam.cache, input, beam.policy);
    beam.policy.finish_step(beam.cache);
    if (observe && observer) observer(beam.cache, out);
    beam.hidden = std::move(out.hidden);
  }

  void advance(Beam& beam, TokenId token, bool observe) const {
    const TokenId ids[1] = {token};
    std::vector<Vector> e = model.embed_text(ids);
    beam.tokens.push_back(token);
    beam.history.push_back(e[0]);
    forward(beam, e[0], false, observe);
  }
};

EmittedToken emitted_of(const FusedStep& fs, std::size_t beam, TokenId token, double score) {
  EmittedToken e;
  e.beam = beam;
  e.token = token;
  e.p_theta = fs.p_theta[static_cast<std::size_t>(token)];
  e.p_theta_max = fs.p_theta[argmax(fs.p_theta)];
  e.fused = fs.fused[static_cast<std::size_t>(token)];
  e.score = score;
  return e;
}

double elapsed_us(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

void DecodeConfig::validate() const {
  require(alpha >= 0.0, "alpha must be non-negative");
  require(gamma_apc >= 0.0 && gamma_apc <= 1.0, "gamma_apc must be in [0, 1]");
  require(visual_mask_rate >= 0.0 && visual_mask_rate <= 1.0, "visual_mask_rate must be in [0, 1]");
  require(beam_size >= 1, "beam_size must be positive");
  require(max_len >= 1, "max_len must be positive");
}

std::vector<std::size_t> mask_visual(std::size_t count, double rate, std::uint64_t seed) {
  std::vector<std::size_t> keep;
  if (count == 0) return keep;
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    if (!rng.bernoulli(rate)) keep.push_back(i);
  }
  if (keep.empty()) keep.push_back(static_cast<std::size_t>(rng.below(count)));
  return keep;
}

std::vector<Vector> assemble_sequence(std::span<const Vector> text, std::span<const Vector> visual,
                                      std::span<const Vector> history) {
  std::vector<Vector> seq;
  seq.reserve(text.size() + visual.size() + history.size());
  if (!text.empty()) seq.push_back(text[0]);
  seq.insert(seq.end(), visual.begin(), visual.end());
  if (text.size() > 1) seq.insert(seq.end(), text.begin() + 1, text.end());
  seq.insert(seq.end(), history.begin(), history.end());
  return seq;
}

Vector pool(std::span<const Vector> vectors, Pooling pooling) {
  if (vectors.empty()) throw ContractViolation("pool: empty sequence");
  if (pooling == Pooling::kLast) return vectors.back();
  Vector out(vectors.front().size(), 0.0);
  for (const Vector& v : vectors) {
    if (v.size() != out.size()) throw ContractViolation("pool: ragged sequence");
    for (std::size_t i = 0; i < v.size(); ++i) out[i] += v[i];
  }
  const double n = static_cast<double>(vectors.size());
  for (double& x : out) x /= n;
  return out;
}

Logits contrastive_logits(const Model& model, std::span<const Vector> text,
                          std::span<const Vector> visual, std::span<const Vector> history,
                          std::size_t stop_layer, Pooling pooling) {
  if (stop_layer > model.dims().layers) {
    throw ConfigError("stop_layer exceeds the model's layer count");
  }
  const std::vector<Vector> seq = assemble_sequence(text, visual, history);
  if (stop_layer == 0) return model.lm_head(pool(seq, pooling));
  KvCache scratch = model.make_cache();
  FullAttention attention;
  std::vector<Vector> hidden;
  hidden.reserve(seq.size());
  for (const Vector& e : seq) {
    scratch.begin_token(false);
    hidden.push_back(model.forward_step(scratch, e, attention, stop_layer).hidden);
    scratch.finish_token();
  }
  return model.lm_head(pool(hidden, pooling));
}

std::vector<TokenId> plausible_set(std::span<const double> probs, double gamma) {
  if (probs.empty()) throw ContractViolation("plausible_set: empty distribution");
  const double threshold = gamma * probs[argmax(probs)];
  std::vector<TokenId> out;
  for (std::size_t y = 0; y < probs.size(); ++y) {
    if (probs[y] >= threshold) out.push_back(static_cast<TokenId>(y));
  }
  return out;
}

Logits fuse(std::span<const double> logit_theta, std::span<const double> logit_phi, double alpha,
            std::span<const TokenId> plausible) {
  if (logit_theta.size() != logit_phi.size()) {
    throw ContractViolation("fuse: logit lengths differ");
  }
  Logits out(logit_theta.size(), kNegInf);
  for (TokenId t : plausible) {
    const auto y = static_cast<std::size_t>(t);
    if (y >= out.size()) throw ContractViolation("fuse: plausible token out of range");
    out[y] = (alpha + 1.0) * logit_theta[y] - alpha * logit_phi[y];
  }
  return out;
}

void validate_decode(const Model& model, std::span<const TokenId> prompt, const DecodeConfig& decode,
                     const SparsifyConfig& sparsify) {
  decode.validate();
  sparsify.validate();
  require(!prompt.empty(), "prompt must be non-empty");
  for (TokenId t : prompt) {
    require(t >= 0 && static_cast<std::size_t>(t) < model.dims().vocab,
            "prompt token " + std::to_string(t) + " outside the model vocabulary");
  }
  require(decode.stop_layer <= model.dims().layers,
          "stop_layer " + std::to_string(decode.stop_layer) + " exceeds layer count " +
              std::to_string(model.dims().layers));
  require(model.supports_pooling(decode.pooling),
          "model kind '" + model.kind() + "' does not support the requested pooling");
}

DecodeResult decode(const Model& model, const ImageDescriptor& image,
                    std::span<const TokenId> prompt, const DecodeConfig& cfg,
                    const SparsifyConfig& sparsify, const ForwardObserver& observer) {
  validate_decode(model, prompt, cfg, sparsify);
  Session s{model, cfg, model.embed_text(prompt), model.embed_visual(image), observer};

  DecodeResult result;
  Beam first{model.make_cache(), SparseVisualAttention(sparsify, model.dims()), {}, {}, {}, 0.0,
             false, false};
  {
    const std::vector<Vector> seq = assemble_sequence(s.text, s.visual.embeddings, {});
    const std::size_t n_visual = s.visual.embeddings.size();
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const bool visual = i >= 1 && i <= n_visual;
      s.forward(first, seq[i], visual, true);
    }
    result.prefill_tokens = seq.size();
  }

  const std::size_t width = cfg.mode == DecodeMode::kGreedy ? 1 : cfg.beam_size;
  std::vector<Beam> beams;
  beams.push_back(std::move(first));

  for (std::size_t step = 0; step < cfg.max_len; ++step) {
    const auto start = std::chrono::steady_clock::now();
    StepDiagnostics diag;
    diag.step = step;
    diag.layers = beams[0].policy.last_step();

    if (cfg.mode == DecodeMode::kGreedy) {
      Beam& b = beams[0];
      const FusedStep fs = s.score(b, step);
      const auto token = static_cast<TokenId>(argmax(fs.fused));
      const Vector lp = log_softmax(fs.fused);
      b.score += lp[static_cast<std::size_t>(token)];
      diag.theta_argmax = static_cast<TokenId>(argmax(fs.logit_theta));
      diag.plausible_size = fs.plausible.size();
      diag.emitted.push_back(emitted_of(fs, 0, token, b.score));
      diag.beam_min_kept = b.score;
      const bool last = step + 1 == cfg.max_len;
      if (token == kEosToken) {
        b.finished = true;
        b.hit_eos = true;
      } else if (last) {
        b.tokens.push_back(token);
      } else {
        s.advance(b, token, true);
      }
      diag.elapsed_us = elapsed_us(start);
      result.steps.push_back(std::move(diag));
      if (b.finished) break;
      continue;
    }

    struct Candidate {
      std::size_t beam;
      TokenId token;  // -1: finished beam carried forward
      double total;
      double fused;
      std::size_t step_index;
    };
    std::vector<Candidate> candidates;
    std::vector<FusedStep> steps(beams.size());
    for (std::size_t bi = 0; bi < beams.size(); ++bi) {
      const Beam& b = beams[bi];
      if (b.finished) {
        candidates.push_back({bi, -1, b.score, 0.0, bi});
        continue;
      }
      steps[bi] = s.score(b, step);
      const Vector lp = log_softmax(steps[bi].fused);
      for (TokenId y : steps[bi].plausible) {
        const auto yi = static_cast<std::size_t>(y);
        candidates.push_back({bi, y, b.score + lp[yi], steps[bi].fused[yi], bi});
      }
      if (bi == 0) {
        diag.theta_argmax = static_cast<TokenId>(argmax(steps[bi].logit_theta));
        diag.plausible_size = steps[bi].plausible.size();
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.total != b.total) return a.total > b.total;
      if (a.beam != b.beam) return a.beam < b.beam;
      if (a.fused != b.fused) return a.fused > b.fused;
      return a.token < b.token;
    });
    const std::size_t kept = std::min(width, candidates.size());
    diag.beam_min_kept = candidates[kept - 1].total;
    if (candidates.size() > kept) diag.beam_max_pruned = candidates[kept].total;

    std::vector<std::size_t> children(beams.size(), 0);
    for (std::size_t c = 0; c < kept; ++c) ++children[candidates[c].beam];
    std::vector<Beam> next;
    next.reserve(kept);
    for (std::size_t c = 0; c < kept; ++c) {
      const Candidate& cand = candidates[c];
      Beam child = --children[cand.beam] == 0 ? std::move(beams[cand.beam]) : beams[cand.beam];
      const bool observe = next.empty();
      if (cand.token < 0) {
        next.push_back(std::move(child));
        continue;
      }
      diag.emitted.push_back(emitted_of(steps[cand.step_index], cand.beam, cand.token, cand.total));
      child.score = cand.total;
      if (cand.token == kEosToken) {
        child.finished = true;
        child.hit_eos = true;
      } else if (step + 1 == cfg.max_len) {
        child.tokens.push_back(cand.token);
      } else {
        s.advance(child, cand.token, observe);
      }
      next.push_back(std::move(child));
    }
    beams = std::move(next);
    diag.elapsed_us = elapsed_us(start);
    result.steps.push_back(std::move(diag));
    if (std::all_of(beams.begin(), beams.end(), [](const Beam& b) { return b.finished; })) break;
  }

  std::size_t best = 0;
  for (std::size_t bi = 1; bi < beams.size(); ++bi) {
    if (beams[bi].score > beams[best].score) best = bi;
  }
  Beam& winner = beams[best];
  result.tokens = winner.tokens;
  result.score = winner.score;
  result.hit_eos = winner.hit_eos;
  result.peak_elements = winner.policy.peak_elements();
  result.mean_attention_error = winner.policy.mean_attention_error();
  return result;
}

}  // namespace svcd
