// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include "svcd/harness/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include "svcd/composer.hpp"
#include "svcd/errors.hpp"
#include "svcd/rng.hpp"
#include "svcd/toy_transformer.hpp"

namespace svcd::harness {

namespace {

constexpr std::uint64_t kNoiseSalt = 1;
constexpr std::uint64_t kDecodeSalt = 2;

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

void flatten(const Json& j, const std::string& prefix, std::vector<std::pair<std::string, Json>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten(*it, key, out);
    } else {
      out.emplace_back(key, *it);
    }
  }
}

// The configuration blocks that affect decoding, flattened in document order.
std::vector<std::pair<std::string, Json>> config_columns(const ExperimentConfig& cfg) {
  const Json full = to_json(cfg);
  std::vector<std::pair<std::string, Json>> cols;
  for (const char* block : {"model", "sparsify", "decode", "ablation"}) {
    flatten(full[block], block, cols);
  }
  return cols;
}

std::string cell(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return format_double(v.get<double>());
  return v.dump();
}

Json json_double(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

ExperimentData load_experiment_data(const ExperimentConfig& cfg) {
  ExperimentData data;
  data.corpus = read_corpus(cfg.corpus);
  if (cfg.max_examples > 0 && data.corpus.size() > cfg.max_examples) {
    data.corpus.resize(cfg.max_examples);
  }
  if (cfg.model.kind == "composer") {
    if (cfg.model.fit_prior) {
      data.prior = fit_prior(data.corpus, cfg.model.findings, cfg.model.eos_prior);
    } else {
      data.prior.eos = cfg.model.eos_prior;
    }
  }
  return data;
}

std::unique_ptr<Model> build_model(const ModelConfig& model, const PlantedPrior& prior,
                                   std::uint64_t seed, std::size_t index) {
  if (model.kind == "transformer") {
    return std::make_unique<ToyTransformer>(ToyTransformerConfig{
        model.seed, model.d_model, model.layers, model.heads, model.vocab, model.d_ff});
  }
  if (model.kind == "composer") {
    ComposerConfig c;
    c.findings = model.findings;
    c.a_vis = model.a_vis;
    c.b_prior = model.b_prior;
    c.sigma = model.sigma;
    c.noise_seed = derive_seed(derive_seed(seed, index), kNoiseSalt);
    c.prior = prior;
    return std::make_unique<PlantedPriorComposer>(std::move(c));
  }
  throw ConfigError("model.kind: unknown model '" + model.kind + "'");
}

std::uint64_t example_decode_seed(std::uint64_t seed, std::size_t index) {
  return derive_seed(derive_seed(seed, index), kDecodeSalt);
}

void apply_axis(ExperimentConfig& cfg, const std::string& axis, double value) {
  if (axis == "none") return;
  if (axis == "alpha") {
    cfg.decode.alpha = value;
  } else if (axis == "beta") {
    cfg.sparsify.beta = value;
  } else if (axis == "lambda") {
    cfg.sparsify.lambda = value;
  } else if (axis == "sparsity") {
    cfg.sparsify.sparsity_rate = value;
  } else if (axis == "stop_layer") {
    if (value < 0.0 || value != std::floor(value)) {
      throw ConfigError("sweep.grid: stop_layer values must be non-negative integers");
    }
    cfg.decode.stop_layer = static_cast<std::size_t>(value);
  } else {
    throw ConfigError("sweep.axis: unknown axis '" + axis +
                      "' (expected alpha, beta, lambda, stop_layer or sparsity)");
  }
  try {
    cfg.effective_sparsify().validate();
    cfg.effective_decode().validate();
  } catch (const ConfigError& e) {
    throw ConfigError("sweep.grid: " + axis + "=" + format_double(value) + ": " + e.what());
  }
}

Json diagnostics_json(const DecodeResult& result) {
  Json steps = Json::array();
  for (const StepDiagnostics& s : result.steps) {
    Json emitted = Json::array();
    for (const EmittedToken& e : s.emitted) {
      emitted.push_back({{"beam", e.beam},
                         {"token", e.token},
                         {"p_theta", json_double(e.p_theta)},
                         {"p_theta_max", json_double(e.p_theta_max)},
                         {"fused", json_double(e.fused)},
                         {"score", json_double(e.score)}});
    }
    Json layers = Json::array();
    for (const LayerDiagnostics& l : s.layers) {
      layers.push_back({{"rows", l.rows},
                        {"retained", l.retained},
                        {"merged", l.merged},
                        {"sparsified", l.sparsified},
                        {"attention_error", json_double(l.attention_error)},
                        {"pruned_positions", l.pruned_positions}});
    }
    steps.push_back({{"step", s.step},
                     {"theta_argmax", s.theta_argmax},
                     {"plausible_size", s.plausible_size},
                     {"beam_min_kept", json_double(s.beam_min_kept)},
                     {"beam_max_pruned", json_double(s.beam_max_pruned)},
                     {"emitted", std::move(emitted)},
                     {"layers", std::move(layers)}});
  }
  return {{"tokens", result.tokens},
          {"hit_eos", result.hit_eos},
          {"score", json_double(result.score)},
          {"prefill_tokens", result.prefill_tokens},
          {"peak_elements", result.peak_elements},
          {"mean_attention_error", json_double(result.mean_attention_error)},
          {"steps", std::move(steps)}};
}

ResultRow run_row(const ExperimentConfig& base, const ExperimentData& data, const std::string& axis,
                  double axis_value, std::uint64_t seed, std::vector<std::string>* diagnostics) {
  ResultRow row;
  row.axis = axis;
  row.axis_value = axis_value;
  row.seed = seed;
  row.config = base;
  row.config.sparsify = base.effective_sparsify();
  row.config.decode = base.effective_decode();
  const SparsifyConfig& sparsify = row.config.sparsify;
  const std::vector<TokenId> prompt{kBosToken};

  double chair_sum = 0.0, recall_sum = 0.0, error_sum = 0.0;
  std::vector<std::string> predictions, labels;
  const auto start = std::chrono::steady_clock::now();
  try {
    std::unique_ptr<Model> shared;
    if (base.model.kind != "composer") shared = build_model(base.model, data.prior, seed, 0);
    for (std::size_t i = 0; i < data.corpus.size(); ++i) {
      const CorpusExample& ex = data.corpus[i];
      std::unique_ptr<Model> own;
      if (!shared) own = build_model(base.model, data.prior, seed, i);
      const Model& model = shared ? *shared : *own;
      DecodeConfig dc = row.config.decode;
      dc.seed = example_decode_seed(seed, i);
      DecodeResult result;
      try {
        result = decode(model, ex.image, prompt, dc, sparsify);
      } catch (const std::exception& e) {
        throw Error("example '" + ex.id + "': " + e.what());
      }

      const std::vector<TokenId> g = metrics::extract_findings(model, result.tokens);
      const metrics::ChairResult c = metrics::chair(g, ex.image.findings);
      chair_sum += c.value;
      if (c.empty_generation) ++row.empty_generations;
      recall_sum += metrics::recall(g, ex.image.findings);
      error_sum += result.mean_attention_error;
      row.peak_elements = std::max(row.peak_elements, result.peak_elements);
      row.tokens += result.tokens.size();
      if (ex.question) {
        const bool yes = std::find(g.begin(), g.end(), ex.question->finding) != g.end();
        predictions.push_back(yes ? "yes" : "no");
        labels.push_back(ex.question->label);
      }
      ++row.examples;
      if (diagnostics) {
        Json line = {{"axis", axis},
                     {"axis_value", axis_value},
                     {"seed", seed},
                     {"example", ex.id}};
        line.update(diagnostics_json(result));
        diagnostics->push_back(line.dump());
      }
    }
  } catch (const std::exception& e) {
    row.status = "error";
    row.error = e.what();
  }
  row.timing.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  row.timing.tokens = row.tokens;
  row.timing.tokens_per_second =
      row.timing.wall_seconds > 0.0 ? static_cast<double>(row.tokens) / row.timing.wall_seconds : 0.0;
  row.timing.peak_elements = row.peak_elements;

  const double nan = std::nan("");
  if (row.status != "ok" || row.examples == 0) {
    row.chair = row.recall = row.accuracy = row.attention_error = nan;
    return row;
  }
  const auto n = static_cast<double>(row.examples);
  row.chair = chair_sum / n;
  row.recall = recall_sum / n;
  row.attention_error = error_sum / n;
  row.questions = predictions.size();
  row.accuracy = predictions.empty() ? nan : metrics::closed_ended_accuracy(predictions, labels);
  return row;
}

std::vector<ResultRow> sweep(const ExperimentConfig& cfg, const ExperimentData& data,
                             const std::string& axis, const std::vector<double>& grid,
                             std::vector<std::string>* diagnostics) {
  if (axis != "none" && grid.empty()) throw ConfigError("sweep.grid: must be non-empty");
  const std::vector<double> values = axis == "none" ? std::vector<double>{0.0} : grid;

  struct Job {
    double value;
    std::uint64_t seed;
    ExperimentConfig cfg;
  };
  std::vector<Job> jobs;
  for (double v : values) {
    ExperimentConfig c = cfg;
    apply_axis(c, axis, v);
    for (std::uint64_t s : cfg.seeds) jobs.push_back({v, s, c});
  }
  std::stable_sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) {
    return a.value != b.value ? a.value < b.value : a.seed < b.seed;
  });

  std::vector<ResultRow> rows(jobs.size());
  std::vector<std::vector<std::string>> lines(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      rows[i] = run_row(jobs[i].cfg, data, axis, jobs[i].value, jobs[i].seed,
                        diagnostics ? &lines[i] : nullptr);
    }
  };
  const std::size_t n_threads = std::min(cfg.threads, jobs.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (diagnostics) {
    for (auto& l : lines) diagnostics->insert(diagnostics->end(), l.begin(), l.end());
  }
  return rows;
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, const ExperimentData& data,
                                      std::vector<std::string>* diagnostics) {
  return sweep(cfg, data, "none", {}, diagnostics);
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> csv_header(const ResultRow& sample) {
  std::vector<std::string> h{"axis", "axis_value", "seed"};
  for (const auto& [k, v] : config_columns(sample.config)) h.push_back(k);
  for (const char* m : {"examples", "questions", "empty_generations", "chair", "recall",
                        "accuracy", "attention_error", "peak_elements", "tokens", "status",
                        "error"}) {
    h.emplace_back(m);
  }
  return h;
}

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
  std::ofstream out = open_output(path);
  auto write = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << csv_escape(fields[i]);
    out << '\n';
  };
  write(csv_header(rows.empty() ? ResultRow{} : rows.front()));
  for (const ResultRow& r : rows) {
    std::vector<std::string> f{r.axis, format_double(r.axis_value), std::to_string(r.seed)};
    for (const auto& [k, v] : config_columns(r.config)) f.push_back(cell(v));
    f.push_back(std::to_string(r.examples));
    f.push_back(std::to_string(r.questions));
    f.push_back(std::to_string(r.empty_generations));
    f.push_back(format_double(r.chair));
    f.push_back(format_double(r.recall));
    f.push_back(format_double(r.accuracy));
    f.push_back(format_double(r.attention_error));
    f.push_back(std::to_string(r.peak_elements));
    f.push_back(std::to_string(r.tokens));
    f.push_back(r.status);
    f.push_back(r.error);
    write(f);
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

void write_results_json(const std::string& path, const std::vector<ResultRow>& rows) {
  Json doc = Json::array();
  for (const ResultRow& r : rows) {
    Json cfg = to_json(r.config);
    Json used;
    for (const char* block : {"model", "sparsify", "decode", "ablation"}) used[block] = cfg[block];
    doc.push_back({{"axis", r.axis},
                   {"axis_value", r.axis_value},
                   {"seed", r.seed},
                   {"status", r.status},
                   {"error", r.error},
                   {"metrics",
                    {{"examples", r.examples},
                     {"questions", r.questions},
                     {"empty_generations", r.empty_generations},
                     {"chair", json_double(r.chair)},
                     {"recall", json_double(r.recall)},
                     {"accuracy", json_double(r.accuracy)},
                     {"attention_error", json_double(r.attention_error)},
                     {"peak_elements", r.peak_elements},
                     {"tokens", r.tokens}}},
                   {"config", std::move(used)}});
  }
  std::ofstream out = open_output(path);
  out << doc.dump(2) << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

void write_timing_csv(const std::string& path, const std::vector<ResultRow>& rows) {
  std::ofstream out = open_output(path);
  out << "axis,axis_value,seed,wall_seconds,tokens,tokens_per_second,peak_elements\n";
  for (const ResultRow& r : rows) {
    out << r.axis << ',' << format_double(r.axis_value) << ',' << r.seed << ','
        << format_double(r.timing.wall_seconds) << ',' << r.timing.tokens << ','
        << format_double(r.timing.tokens_per_second) << ',' << r.timing.peak_elements << '\n';
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out = open_output(path);
  for (const std::string& l : lines) out << l << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace svcd::harness
