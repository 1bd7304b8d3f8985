// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include "svcd/harness/analysis.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "svcd/errors.hpp"

namespace svcd::harness {

namespace {

SparsifyConfig dense() {
  SparsifyConfig s;
  s.sparsity_rate = 1.0;
  s.sac = false;
  return s;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

void write_histogram(const std::string& path, const std::vector<HistogramBin>& bins) {
  std::ofstream out = open_output(path);
  out << "bin,lo,hi,count,fraction\n";
  for (std::size_t i = 0; i < bins.size(); ++i) {
    out << i << ',' << format_double(bins[i].lo) << ',' << format_double(bins[i].hi) << ','
        << bins[i].count << ',' << format_double(bins[i].fraction) << '\n';
  }
}

}  // namespace

ImageDescriptor prefix_image(const Model& model, std::size_t tokens) {
  const auto vocab = model.finding_vocabulary();
  if (vocab.empty()) throw ConfigError("model has no finding vocabulary");
  const std::size_t findings = std::min<std::size_t>(16, vocab.size());
  ImageDescriptor image;
  image.findings.assign(vocab.begin(), vocab.begin() + static_cast<std::ptrdiff_t>(findings));
  image.tokens_per_finding = std::max<std::size_t>(1, (tokens + findings - 1) / findings);
  return image;
}

BenchResult bench(const ExperimentConfig& cfg) {
  if (cfg.model.kind != "transformer") throw ConfigError("bench: model.kind must be 'transformer'");
  const std::unique_ptr<Model> model = build_model(cfg.model, {}, 0, 0);
  const BenchConfig& b = cfg.bench;
  const std::vector<TokenId> prompt{kBosToken};
  BenchResult result;

  DecodeConfig dc = cfg.effective_decode();
  dc.mode = DecodeMode::kGreedy;
  dc.max_len = b.generate;
  dc.ignore_eos = true;

  // Sparse versus full: primary branch only.
  {
    DecodeConfig plain = dc;
    plain.alpha = 0.0;
    SparsifyConfig sparse = cfg.effective_sparsify();
    sparse.sparsity_rate = b.sparsity_rate;
    sparse.cache_mode = CacheMode::kCompacted;
    sparse.per_head_mask = false;
    sparse.sac = false;
    const SparsifyConfig full = dense();
    const ImageDescriptor image = prefix_image(*model, b.prefix_tokens);
    result.prefix_tokens = image.visual_token_count() + prompt.size();
    std::vector<double> full_t, sparse_t;
    for (std::size_t r = 0; r < b.repeats; ++r) {
      const auto tf = metrics::measure_run([&] { return decode(*model, image, prompt, plain, full); });
      const auto ts = metrics::measure_run([&] { return decode(*model, image, prompt, plain, sparse); });
      result.samples.push_back({"sparse_vs_full", "full", r, tf});
      result.samples.push_back({"sparse_vs_full", "sparse", r, ts});
      full_t.push_back(tf.wall_seconds);
      sparse_t.push_back(ts.wall_seconds);
    }
    result.full_median_seconds = metrics::median(full_t);
    result.sparse_median_seconds = metrics::median(sparse_t);
  }

  // Stop-layer sweep: the contrastive branch runs through 0..layers decoder layers.
  {
    if (dc.alpha == 0.0) throw ConfigError("bench: decode.alpha must be positive for the stop-layer sweep");
    const ImageDescriptor image = prefix_image(*model, b.stop_layer_prefix);
    const SparsifyConfig full = dense();
    const std::size_t layers = model->dims().layers;
    std::vector<std::vector<double>> tps(layers + 1);
    for (std::size_t r = 0; r < b.repeats; ++r) {
      for (std::size_t s = 0; s <= layers; ++s) {
        DecodeConfig d = dc;
        d.stop_layer = s;
        const auto t = metrics::measure_run([&] { return decode(*model, image, prompt, d, full); });
        result.samples.push_back({"stop_layer", std::to_string(s), r, t});
        tps[s].push_back(t.tokens_per_second);
      }
    }
    for (const auto& v : tps) result.stop_layer_median_tps.push_back(metrics::median(v));
  }
  return result;
}

void write_bench_csv(const std::string& path, const BenchResult& result) {
  std::ofstream out = open_output(path);
  out << "section,setting,repeat,wall_seconds,tokens,tokens_per_second,peak_elements\n";
  for (const BenchSample& s : result.samples) {
    out << s.section << ',' << s.setting << ',' << s.repeat << ','
        << format_double(s.timing.wall_seconds) << ',' << s.timing.tokens << ','
        << format_double(s.timing.tokens_per_second) << ',' << s.timing.peak_elements << '\n';
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

std::vector<HistogramBin> histogram(const std::vector<double>& values, std::size_t bins) {
  std::vector<HistogramBin> out;
  if (values.empty()) return out;
  if (bins == 0) throw ConfigError("histogram: bins must be positive");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  std::size_t n = std::min(bins, values.size());
  if (!(hi > lo)) n = 1;
  const double width = (hi - lo) / static_cast<double>(n);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].lo = lo + width * static_cast<double>(i);
    out[i].hi = i + 1 == n ? hi : lo + width * static_cast<double>(i + 1);
  }
  for (double v : values) {
    std::size_t i = n == 1 ? 0 : static_cast<std::size_t>((v - lo) / width);
    if (i >= n) i = n - 1;
    ++out[i].count;
  }
  for (HistogramBin& b : out) b.fraction = static_cast<double>(b.count) / static_cast<double>(values.size());
  return out;
}

AttentionStats attention_stats(const ExperimentConfig& cfg, const CorpusExample& example) {
  const std::unique_ptr<Model> model = build_model(cfg.model, {}, 0, 0);
  if (!model->exposes_attention()) {
    throw ConfigError("attn-stats: model '" + model->kind() + "' has no meaningful attention");
  }
  AttentionStats stats;
  std::vector<double> visual_scores, text_scores;
  auto observe = [&](const KvCache& cache, const StepOutput& out) {
    const LayerCache& first = cache.layer(0);
    ScoreRecord rec;
    rec.record = stats.records.size();
    rec.scores.assign(first.length(), 0.0);
    std::size_t contributions = 0;
    for (std::size_t l = 0; l < out.attention.size(); ++l) {
      for (const AttentionResult& r : out.attention[l]) {
        for (std::size_t k = 0; k < r.support.size(); ++k) {
          if (r.is_row(k)) rec.scores[r.support[k]] += r.probs[k];
        }
        ++contributions;
      }
    }
    for (double& s : rec.scores) s /= static_cast<double>(contributions);
    for (std::size_t j = 0; j < first.length(); ++j) {
      rec.positions.push_back(first.info(j).position);
      rec.visual.push_back(first.info(j).visual);
      (first.info(j).visual ? visual_scores : text_scores).push_back(rec.scores[j]);
    }
    stats.records.push_back(std::move(rec));
  };
  DecodeConfig dc = cfg.effective_decode();
  dc.seed = example_decode_seed(cfg.seeds.front(), 0);
  const std::vector<TokenId> prompt{kBosToken};
  decode(*model, example.image, prompt, dc, dense(), observe);
  stats.visual = histogram(visual_scores, cfg.attn_stats.bins);
  stats.text = histogram(text_scores, cfg.attn_stats.bins);
  return stats;
}

void write_attention_stats(const AttnStatsConfig& cfg, const AttentionStats& stats) {
  std::ofstream out = open_output(cfg.scores_csv);
  out << "record,cache_length,rank,position,visual,score\n";
  for (const ScoreRecord& r : stats.records) {
    std::vector<std::size_t> order(r.scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return r.scores[a] < r.scores[b]; });
    for (std::size_t k = 0; k < order.size(); ++k) {
      const std::size_t j = order[k];
      out << r.record << ',' << r.scores.size() << ',' << k << ',' << r.positions[j] << ','
          << (r.visual[j] ? 1 : 0) << ',' << format_double(r.scores[j]) << '\n';
    }
  }
  if (!out) throw DataError("write failed for '" + cfg.scores_csv + "'");
  write_histogram(cfg.visual_histogram, stats.visual);
  write_histogram(cfg.text_histogram, stats.text);
}

}  // namespace svcd::harness
