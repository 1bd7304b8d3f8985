// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: corpus generation, single decodes, experiments,
// sweeps, timing benchmarks and attention statistics.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "svcd/errors.hpp"
#include "svcd/harness/analysis.hpp"

namespace {

using svcd::harness::Json;

constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

// Flag values collected before the configuration document is assembled.
struct Overrides {
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, Json>> fields;
  bool no_vats = false, no_vps = false, no_mbs = false, no_sac = false;
};

template <typename T>
void mirror(CLI::App* app, Overrides& o, const std::string& flag, const std::string& path,
            const std::string& help) {
  app->add_option_function<T>(
      flag, [&o, path](const T& v) { o.fields.emplace_back(path, Json(v)); }, help);
}

void common_options(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config_path, "JSON configuration document");
  app->add_option("--set", o.sets, "Override any field: dotted.path=value (JSON value)");
  mirror<std::string>(app, o, "--corpus", "corpus", "Corpus JSON-lines file");
  mirror<std::vector<std::uint64_t>>(app, o, "--seeds", "seeds", "Run seeds");
  mirror<std::size_t>(app, o, "--threads", "threads", "Worker threads");
  mirror<std::size_t>(app, o, "--max-examples", "max_examples", "Limit the corpus (0 = all)");
  mirror<std::string>(app, o, "--model", "model.kind", "composer | transformer");
  mirror<double>(app, o, "--alpha", "decode.alpha", "Contrastive strength");
  mirror<double>(app, o, "--gamma", "decode.gamma_apc", "Plausibility threshold");
  mirror<double>(app, o, "--mask-rate", "decode.visual_mask_rate", "Visual mask rate");
  mirror<std::size_t>(app, o, "--stop-layer", "decode.stop_layer", "Contrastive stop layer");
  mirror<std::size_t>(app, o, "--beam-size", "decode.beam_size", "Beam width");
  mirror<std::size_t>(app, o, "--max-len", "decode.max_len", "Maximum generated tokens");
  mirror<std::string>(app, o, "--mode", "decode.mode", "greedy | beam");
  mirror<double>(app, o, "--sparsity-rate", "sparsify.sparsity_rate", "Retained fraction");
  mirror<double>(app, o, "--lambda", "sparsify.lambda", "Visual saliency weight");
  mirror<double>(app, o, "--beta", "sparsify.beta", "Calibration strength");
  mirror<std::string>(app, o, "--cache-mode", "sparsify.cache_mode", "logical | compacted");
  app->add_flag("--no-vats", o.no_vats, "Disable visual-aware token selection");
  app->add_flag("--no-vps", o.no_vps, "Disable visual saliency (lambda = 0)");
  app->add_flag("--no-mbs", o.no_mbs, "Contrastive branch keeps every visual token");
  app->add_flag("--no-sac", o.no_sac, "Disable score calibration (beta = 0)");
}

svcd::harness::ExperimentConfig assemble(const Overrides& o) {
  Json doc = o.config_path.empty() ? Json::object() : svcd::harness::load_json_file(o.config_path);
  if (!doc.is_object()) throw svcd::ConfigError("configuration must be a JSON object");
  for (const std::string& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw svcd::ConfigError("--set expects path=value, got '" + s + "'");
    const std::string raw = s.substr(eq + 1);
    Json value;
    try {
      value = Json::parse(raw);
    } catch (const Json::parse_error&) {
      value = raw;
    }
    svcd::harness::set_path(doc, s.substr(0, eq), value);
  }
  for (const auto& [path, value] : o.fields) svcd::harness::set_path(doc, path, value);
  if (o.no_vats) svcd::harness::set_path(doc, "ablation.vats", false);
  if (o.no_vps) svcd::harness::set_path(doc, "ablation.vps", false);
  if (o.no_mbs) svcd::harness::set_path(doc, "ablation.mbs", false);
  if (o.no_sac) svcd::harness::set_path(doc, "ablation.sac", false);
  return svcd::harness::parse_config(doc);
}

void write_run_outputs(const svcd::harness::ExperimentConfig& cfg,
                       const std::vector<svcd::harness::ResultRow>& rows,
                       const std::vector<std::string>& diagnostics) {
  svcd::harness::write_results_csv(cfg.output.csv, rows);
  svcd::harness::write_results_json(cfg.output.json, rows);
  if (!cfg.output.timing.empty()) svcd::harness::write_timing_csv(cfg.output.timing, rows);
  if (!cfg.output.diagnostics.empty()) svcd::harness::write_lines(cfg.output.diagnostics, diagnostics);
  std::size_t errors = 0;
  for (const auto& r : rows) {
    if (r.status != "ok") {
      ++errors;
      std::cerr << "row seed=" << r.seed << " " << r.axis << "=" << r.axis_value
                << " failed: " << r.error << "\n";
    }
  }
  std::cout << "wrote " << rows.size() << " rows (" << errors << " errors) to " << cfg.output.csv
            << " and " << cfg.output.json << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse visual contrastive decoding toolkit"};
  app.require_subcommand(1);
  Overrides o;

  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic JSON-lines corpus");
  common_options(gen, o);
  std::string gen_out;
  gen->add_option("--out", gen_out, "Output path (default: the configured corpus path)");
  mirror<std::size_t>(gen, o, "--n", "generator.n", "Number of examples");
  mirror<std::uint64_t>(gen, o, "--seed", "generator.seed", "Generator seed");
  mirror<double>(gen, o, "--prior-rate", "generator.prior_rate", "Trigger-to-distractor rate");
  mirror<std::size_t>(gen, o, "--findings", "generator.findings", "Finding vocabulary size");

  auto* dec = app.add_subcommand("decode", "Decode one example and print tokens and diagnostics");
  common_options(dec, o);
  std::string example_id;
  std::vector<int> findings;
  std::size_t tokens_per_finding = 4;
  std::uint64_t seed = 0;
  dec->add_option("--example", example_id, "Corpus example id");
  dec->add_option("--findings", findings, "Image findings (instead of --example)");
  dec->add_option("--tokens-per-finding", tokens_per_finding, "Visual tokens per finding");
  dec->add_option("--seed", seed, "Run seed");

  auto* run = app.add_subcommand("run", "Run an experiment over the corpus");
  common_options(run, o);
  auto* swp = app.add_subcommand("sweep", "Sweep one hyperparameter over a grid");
  common_options(swp, o);
  mirror<std::string>(swp, o, "--axis", "sweep.axis", "alpha | beta | lambda | stop_layer | sparsity");
  mirror<std::vector<double>>(swp, o, "--grid", "sweep.grid", "Grid values");
  for (auto* sub : {run, swp}) {
    mirror<std::string>(sub, o, "--out-csv", "output.csv", "Results CSV");
    mirror<std::string>(sub, o, "--out-json", "output.json", "Results JSON");
    mirror<std::string>(sub, o, "--out-timing", "output.timing", "Timing CSV (empty disables)");
    mirror<std::string>(sub, o, "--diagnostics", "output.diagnostics", "Per-step JSON lines");
  }

  auto* bch = app.add_subcommand("bench", "Time sparse versus full decoding and stop layers");
  common_options(bch, o);
  mirror<std::size_t>(bch, o, "--prefix", "bench.prefix_tokens", "Visual prefix length");
  mirror<std::size_t>(bch, o, "--generate", "bench.generate", "Tokens generated per run");
  mirror<std::size_t>(bch, o, "--repeats", "bench.repeats", "Paired repeats");
  mirror<std::string>(bch, o, "--csv", "bench.csv", "Timing samples CSV");

  auto* att = app.add_subcommand("attn-stats", "Export sorted attention scores and histograms");
  common_options(att, o);
  mirror<std::size_t>(att, o, "--bins", "attn_stats.bins", "Histogram bins");
  mirror<std::string>(att, o, "--example", "attn_stats.example", "Corpus example id");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const svcd::harness::ExperimentConfig cfg = assemble(o);
    if (gen->parsed()) {
      const std::string path = gen_out.empty() ? cfg.corpus : gen_out;
      svcd::harness::write_corpus(path, svcd::harness::gen_corpus(cfg.generator));
      std::cout << "wrote " << cfg.generator.n << " examples to " << path << "\n";
    } else if (dec->parsed()) {
      svcd::harness::ExperimentData data;
      svcd::ImageDescriptor image;
      std::size_t index = 0;
      if (!findings.empty()) {
        image.findings.assign(findings.begin(), findings.end());
        image.tokens_per_finding = tokens_per_finding;
        if (cfg.model.kind == "composer" && cfg.model.fit_prior) data = svcd::harness::load_experiment_data(cfg);
      } else {
        data = svcd::harness::load_experiment_data(cfg);
        auto it = std::find_if(data.corpus.begin(), data.corpus.end(),
                               [&](const auto& ex) { return example_id.empty() || ex.id == example_id; });
        if (it == data.corpus.end()) throw svcd::InputError("no corpus example '" + example_id + "'");
        index = static_cast<std::size_t>(it - data.corpus.begin());
        image = it->image;
      }
      const auto model = svcd::harness::build_model(cfg.model, data.prior, seed, index);
      svcd::DecodeConfig dc = cfg.effective_decode();
      dc.seed = svcd::harness::example_decode_seed(seed, index);
      const std::vector<svcd::TokenId> prompt{svcd::kBosToken};
      const svcd::DecodeResult result = svcd::decode(*model, image, prompt, dc, cfg.effective_sparsify());
      Json out = svcd::harness::diagnostics_json(result);
      out["findings"] = svcd::metrics::extract_findings(*model, result.tokens);
      std::cout << out.dump(2) << "\n";
    } else if (run->parsed() || swp->parsed()) {
      const svcd::harness::ExperimentData data = svcd::harness::load_experiment_data(cfg);
      std::vector<std::string> diagnostics;
      auto* sink = cfg.output.diagnostics.empty() ? nullptr : &diagnostics;
      const auto rows = run->parsed()
                            ? svcd::harness::run_experiment(cfg, data, sink)
                            : svcd::harness::sweep(cfg, data, cfg.sweep.axis, cfg.sweep.grid, sink);
      write_run_outputs(cfg, rows, diagnostics);
    } else if (bch->parsed()) {
      const svcd::harness::BenchResult r = svcd::harness::bench(cfg);
      svcd::harness::write_bench_csv(cfg.bench.csv, r);
      std::cout << "prefix " << r.prefix_tokens << " tokens: full median "
                << r.full_median_seconds << " s, sparse median " << r.sparse_median_seconds
                << " s\n";
      for (std::size_t s = 0; s < r.stop_layer_median_tps.size(); ++s) {
        std::cout << "stop_layer " << s << ": median " << r.stop_layer_median_tps[s] << " tok/s\n";
      }
    } else if (att->parsed()) {
      const svcd::harness::ExperimentData data = svcd::harness::load_experiment_data(cfg);
      auto it = std::find_if(data.corpus.begin(), data.corpus.end(), [&](const auto& ex) {
        return cfg.attn_stats.example.empty() || ex.id == cfg.attn_stats.example;
      });
      if (it == data.corpus.end()) {
        throw svcd::InputError("no corpus example '" + cfg.attn_stats.example + "'");
      }
      const auto stats = svcd::harness::attention_stats(cfg, *it);
      svcd::harness::write_attention_stats(cfg.attn_stats, stats);
      std::cout << "wrote " << stats.records.size() << " records to " << cfg.attn_stats.scores_csv
                << "\n";
    }
  } catch (const svcd::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const svcd::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const svcd::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return 0;
}
