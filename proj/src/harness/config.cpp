// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include "svcd/harness/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "svcd/errors.hpp"

namespace svcd::harness {

namespace {

// Walks one JSON object, type-checking fields and rejecting unknown keys.
class Reader {
 public:
  Reader(const Json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    out = convert<T>(*it, field(key));
  }

  template <typename E>
  void get_enum(const char* key, E& out, std::initializer_list<std::pair<const char*, E>> names) {
    std::string name;
    get(key, name);
    if (obj_.find(key) == obj_.end()) return;
    for (const auto& [n, v] : names) {
      if (name == n) {
        out = v;
        return;
      }
    }
    throw ConfigError(field(key) + ": unknown value '" + name + "'");
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown field");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  template <typename T>
  static T convert(const Json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path + ": expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path + ": expected a number");
      return v.get<T>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
      if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
      const auto x = v.get<std::int64_t>();
      if (std::is_unsigned_v<T> && x < 0) throw ConfigError(path + ": must be non-negative");
      return static_cast<T>(x);
    } else {
      if (!v.is_array()) throw ConfigError(path + ": expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
      }
      return out;
    }
  }

  const Json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void read_model(const Json& j, ModelConfig& m) {
  Reader r(j, "model");
  r.get("kind", m.kind);
  r.get("seed", m.seed);
  r.get("d_model", m.d_model);
  r.get("layers", m.layers);
  r.get("heads", m.heads);
  r.get("vocab", m.vocab);
  r.get("d_ff", m.d_ff);
  r.get("findings", m.findings);
  r.get("a_vis", m.a_vis);
  r.get("b_prior", m.b_prior);
  r.get("sigma", m.sigma);
  r.get("eos_prior", m.eos_prior);
  r.get("fit_prior", m.fit_prior);
  r.finish();
  require(m.kind == "composer" || m.kind == "transformer",
          "model.kind: expected 'composer' or 'transformer'");
  require(m.sigma >= 0.0, "model.sigma: must be non-negative");
}

void read_sparsify(const Json& j, SparsifyConfig& s) {
  Reader r(j, "sparsify");
  r.get("sparsity_rate", s.sparsity_rate);
  r.get("lambda", s.lambda);
  r.get("w_recent", s.w_recent);
  r.get("rho_merge", s.rho_merge);
  r.get("knn_k", s.knn_k);
  r.get("early_layer_frac", s.early_layer_frac);
  r.get("per_head_mask", s.per_head_mask);
  r.get("l_min", s.l_min);
  r.get_enum("cache_mode", s.cache_mode,
             {{"logical", CacheMode::kLogical}, {"compacted", CacheMode::kCompacted}});
  r.get("compact_slack", s.compact_slack);
  r.get("text_only_pruning", s.text_only_pruning);
  r.get("vats", s.vats);
  r.get("vps", s.vps);
  r.get("merge_pruned", s.merge_pruned);
  r.get("beta", s.beta);
  r.get("sac", s.sac);
  r.get_enum("sac_input", s.sac_input,
             {{"probabilities", SacInput::kProbabilities}, {"raw_scores", SacInput::kRawScores}});
  r.get("sac_before_vats", s.sac_before_vats);
  r.finish();
}

void read_decode(const Json& j, DecodeConfig& d) {
  Reader r(j, "decode");
  r.get("alpha", d.alpha);
  r.get("gamma_apc", d.gamma_apc);
  r.get("visual_mask_rate", d.visual_mask_rate);
  r.get("stop_layer", d.stop_layer);
  r.get("beam_size", d.beam_size);
  r.get("max_len", d.max_len);
  r.get("seed", d.seed);
  r.get_enum("mode", d.mode, {{"greedy", DecodeMode::kGreedy}, {"beam", DecodeMode::kBeam}});
  r.get_enum("pooling", d.pooling, {{"mean", Pooling::kMean}, {"last", Pooling::kLast}});
  r.get("mbs", d.mbs);
  r.get("ignore_eos", d.ignore_eos);
  r.finish();
}

void read_generator(const Json& j, GeneratorConfig& g) {
  Reader r(j, "generator");
  r.get("findings", g.findings);
  r.get("tokens_per_finding", g.tokens_per_finding);
  r.get("min_findings", g.min_findings);
  r.get("max_findings", g.max_findings);
  r.get("trigger_pairs", g.trigger_pairs);
  r.get("prior_rate", g.prior_rate);
  r.get("question_rate", g.question_rate);
  r.get("n", g.n);
  r.get("seed", g.seed);
  r.finish();
}

}  // namespace

SparsifyConfig ExperimentConfig::effective_sparsify() const {
  SparsifyConfig s = sparsify;
  s.vats = s.vats && ablation.vats;
  s.vps = s.vps && ablation.vps;
  s.sac = s.sac && ablation.sac;
  return s;
}

DecodeConfig ExperimentConfig::effective_decode() const {
  DecodeConfig d = decode;
  d.mbs = d.mbs && ablation.mbs;
  return d;
}

ExperimentConfig parse_config(const Json& doc) {
  ExperimentConfig cfg;
  Reader r(doc, "");
  if (const Json* j = r.child("model")) read_model(*j, cfg.model);
  if (const Json* j = r.child("sparsify")) read_sparsify(*j, cfg.sparsify);
  if (const Json* j = r.child("decode")) read_decode(*j, cfg.decode);
  if (const Json* j = r.child("generator")) read_generator(*j, cfg.generator);
  if (const Json* j = r.child("ablation")) {
    Reader a(*j, "ablation");
    a.get("vats", cfg.ablation.vats);
    a.get("vps", cfg.ablation.vps);
    a.get("mbs", cfg.ablation.mbs);
    a.get("sac", cfg.ablation.sac);
    a.finish();
  }
  if (const Json* j = r.child("sweep")) {
    Reader s(*j, "sweep");
    s.get("axis", cfg.sweep.axis);
    s.get("grid", cfg.sweep.grid);
    s.finish();
  }
  if (const Json* j = r.child("output")) {
    Reader o(*j, "output");
    o.get("csv", cfg.output.csv);
    o.get("json", cfg.output.json);
    o.get("timing", cfg.output.timing);
    o.get("diagnostics", cfg.output.diagnostics);
    o.finish();
  }
  if (const Json* j = r.child("bench")) {
    Reader b(*j, "bench");
    b.get("prefix_tokens", cfg.bench.prefix_tokens);
    b.get("generate", cfg.bench.generate);
    b.get("repeats", cfg.bench.repeats);
    b.get("sparsity_rate", cfg.bench.sparsity_rate);
    b.get("stop_layer_prefix", cfg.bench.stop_layer_prefix);
    b.get("csv", cfg.bench.csv);
    b.finish();
  }
  if (const Json* j = r.child("attn_stats")) {
    Reader a(*j, "attn_stats");
    a.get("bins", cfg.attn_stats.bins);
    a.get("example", cfg.attn_stats.example);
    a.get("scores_csv", cfg.attn_stats.scores_csv);
    a.get("visual_histogram", cfg.attn_stats.visual_histogram);
    a.get("text_histogram", cfg.attn_stats.text_histogram);
    a.finish();
  }
  r.get("corpus", cfg.corpus);
  r.get("seeds", cfg.seeds);
  r.get("max_examples", cfg.max_examples);
  r.get("threads", cfg.threads);
  r.finish();

  require(!cfg.seeds.empty(), "seeds: must list at least one seed");
  require(cfg.threads >= 1, "threads: must be at least 1");
  require(cfg.bench.repeats >= 1, "bench.repeats: must be at least 1");
  require(cfg.bench.prefix_tokens >= 1, "bench.prefix_tokens: must be at least 1");
  require(cfg.attn_stats.bins >= 1, "attn_stats.bins: must be at least 1");
  try {
    cfg.effective_sparsify().validate();
    cfg.effective_decode().validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("sparsify/decode: ") + e.what());
  }
  return cfg;
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["model"] = {{"kind", c.model.kind},         {"seed", c.model.seed},
                {"d_model", c.model.d_model},   {"layers", c.model.layers},
                {"heads", c.model.heads},       {"vocab", c.model.vocab},
                {"d_ff", c.model.d_ff},         {"findings", c.model.findings},
                {"a_vis", c.model.a_vis},       {"b_prior", c.model.b_prior},
                {"sigma", c.model.sigma},       {"eos_prior", c.model.eos_prior},
                {"fit_prior", c.model.fit_prior}};
  const SparsifyConfig& s = c.sparsify;
  j["sparsify"] = {{"sparsity_rate", s.sparsity_rate},
                   {"lambda", s.lambda},
                   {"w_recent", s.w_recent},
                   {"rho_merge", s.rho_merge},
                   {"knn_k", s.knn_k},
                   {"early_layer_frac", s.early_layer_frac},
                   {"per_head_mask", s.per_head_mask},
                   {"l_min", s.l_min},
                   {"cache_mode", to_string(s.cache_mode)},
                   {"compact_slack", s.compact_slack},
                   {"text_only_pruning", s.text_only_pruning},
                   {"vats", s.vats},
                   {"vps", s.vps},
                   {"merge_pruned", s.merge_pruned},
                   {"beta", s.beta},
                   {"sac", s.sac},
                   {"sac_input", to_string(s.sac_input)},
                   {"sac_before_vats", s.sac_before_vats}};
  const DecodeConfig& d = c.decode;
  j["decode"] = {{"alpha", d.alpha},
                 {"gamma_apc", d.gamma_apc},
                 {"visual_mask_rate", d.visual_mask_rate},
                 {"stop_layer", d.stop_layer},
                 {"beam_size", d.beam_size},
                 {"max_len", d.max_len},
                 {"seed", d.seed},
                 {"mode", to_string(d.mode)},
                 {"pooling", to_string(d.pooling)},
                 {"mbs", d.mbs},
                 {"ignore_eos", d.ignore_eos}};
  j["ablation"] = {{"vats", c.ablation.vats},
                   {"vps", c.ablation.vps},
                   {"mbs", c.ablation.mbs},
                   {"sac", c.ablation.sac}};
  const GeneratorConfig& g = c.generator;
  j["generator"] = {{"findings", g.findings},         {"tokens_per_finding", g.tokens_per_finding},
                    {"min_findings", g.min_findings}, {"max_findings", g.max_findings},
                    {"trigger_pairs", g.trigger_pairs}, {"prior_rate", g.prior_rate},
                    {"question_rate", g.question_rate}, {"n", g.n},
                    {"seed", g.seed}};
  j["sweep"] = {{"axis", c.sweep.axis}, {"grid", c.sweep.grid}};
  j["output"] = {{"csv", c.output.csv},
                 {"json", c.output.json},
                 {"timing", c.output.timing},
                 {"diagnostics", c.output.diagnostics}};
  j["bench"] = {{"prefix_tokens", c.bench.prefix_tokens},
                {"generate", c.bench.generate},
                {"repeats", c.bench.repeats},
                {"sparsity_rate", c.bench.sparsity_rate},
                {"stop_layer_prefix", c.bench.stop_layer_prefix},
                {"csv", c.bench.csv}};
  j["attn_stats"] = {{"bins", c.attn_stats.bins},
                     {"example", c.attn_stats.example},
                     {"scores_csv", c.attn_stats.scores_csv},
                     {"visual_histogram", c.attn_stats.visual_histogram},
                     {"text_histogram", c.attn_stats.text_histogram}};
  j["corpus"] = c.corpus;
  j["seeds"] = c.seeds;
  j["max_examples"] = c.max_examples;
  j["threads"] = c.threads;
  return j;
}

Json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

void set_path(Json& doc, const std::string& dotted, Json value) {
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot - start);
    if (key.empty()) throw ConfigError("invalid field path '" + dotted + "'");
    if (!node->is_object()) *node = Json::object();
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

const char* to_string(CacheMode m) { return m == CacheMode::kLogical ? "logical" : "compacted"; }
const char* to_string(DecodeMode m) { return m == DecodeMode::kGreedy ? "greedy" : "beam"; }
const char* to_string(Pooling p) { return p == Pooling::kMean ? "mean" : "last"; }
const char* to_string(SacInput s) {
  return s == SacInput::kProbabilities ? "probabilities" : "raw_scores";
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace svcd::harness
