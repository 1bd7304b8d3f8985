// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "svcd/errors.hpp"
#include "svcd/harness/analysis.hpp"
#include "svcd/harness/config.hpp"
#include "svcd/harness/corpus.hpp"
#include "svcd/harness/experiment.hpp"
#include "svcd/oracle/oracle.hpp"

using namespace svcd;
using namespace svcd::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("svcd_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

ExperimentConfig transformer_config(const std::string& corpus) {
  ExperimentConfig cfg;
  cfg.corpus = corpus;
  cfg.model.kind = "transformer";
  cfg.model.seed = 5;
  cfg.decode.max_len = 12;
  cfg.decode.mode = DecodeMode::kGreedy;
  cfg.max_examples = 8;
  return cfg;
}

std::string make_corpus(const fs::path& dir, std::size_t n, std::uint64_t seed = 0) {
  GeneratorConfig g;
  g.n = n;
  g.seed = seed;
  const std::string path = (dir / "corpus.jsonl").string();
  write_corpus(path, gen_corpus(g));
  return path;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("corpus generation is deterministic") {
    const fs::path dir = scratch_dir("gen");
    GeneratorConfig g;
    g.n = 50;
    write_corpus((dir / "a.jsonl").string(), gen_corpus(g));
    write_corpus((dir / "b.jsonl").string(), gen_corpus(g));
    CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
    g.seed = 1;
    write_corpus((dir / "c.jsonl").string(), gen_corpus(g));
    CHECK(slurp(dir / "a.jsonl") != slurp(dir / "c.jsonl"));
  }

  TEST_CASE("corpus round trip") {
    const fs::path dir = scratch_dir("roundtrip");
    GeneratorConfig g;
    g.n = 30;
    const auto corpus = gen_corpus(g);
    write_corpus((dir / "c.jsonl").string(), corpus);
    const auto back = read_corpus((dir / "c.jsonl").string());
    REQUIRE(back.size() == corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      CHECK(back[i].id == corpus[i].id);
      CHECK(back[i].image.findings == corpus[i].image.findings);
      CHECK(back[i].report == corpus[i].report);
      CHECK(back[i].question.has_value() == corpus[i].question.has_value());
    }
    CHECK(corpus[0].id == "ex-000000");
  }

  TEST_CASE("generated examples are well formed") {
    GeneratorConfig g;
    g.n = 300;
    for (const CorpusExample& ex : gen_corpus(g)) {
      REQUIRE(!ex.report.empty());
      CHECK(ex.report.back() == kEosToken);
      CHECK(ex.image.findings.size() >= g.min_findings);
      CHECK(ex.image.findings.size() <= g.max_findings);
      CHECK(std::is_sorted(ex.image.findings.begin(), ex.image.findings.end()));
      for (TokenId f : ex.image.findings) {
        CHECK(f >= 2);
        CHECK(f <= static_cast<TokenId>(g.findings + 1));
      }
      REQUIRE(ex.question.has_value());
      const bool present = std::find(ex.image.findings.begin(), ex.image.findings.end(),
                                     ex.question->finding) != ex.image.findings.end();
      CHECK(ex.question->label == (present ? "yes" : "no"));
    }
  }

  TEST_CASE("distractors follow the configured prior rate") {
    GeneratorConfig g;
    g.n = 1000;
    auto count = [&](double rate) {
      g.prior_rate = rate;
      std::size_t eligible = 0, planted = 0;
      for (const CorpusExample& ex : gen_corpus(g)) {
        const auto& img = ex.image.findings;
        for (TokenId t : img) {
          const TokenId d = distractor_of(g, t);
          if (d < 0 || std::find(img.begin(), img.end(), d) != img.end()) continue;
          ++eligible;
          if (std::find(ex.report.begin(), ex.report.end(), d) != ex.report.end()) ++planted;
        }
      }
      return std::pair{eligible, planted};
    };
    const auto [e0, p0] = count(0.0);
    CHECK(e0 > 0);
    CHECK(p0 == 0);
    const auto [e8, p8] = count(0.8);
    const double rate = static_cast<double>(p8) / static_cast<double>(e8);
    CHECK(rate >= 0.74);
    CHECK(rate <= 0.86);
  }

  TEST_CASE("fitted prior recovers the planted links") {
    GeneratorConfig g;
    g.n = 1000;
    const PlantedPrior p = fit_prior(gen_corpus(g), g.findings, 0.2);
    CHECK(p.links[0][3] > 0.7);
    CHECK(p.links[0][8] == 0.0);  // finding 10 is never planted
    CHECK(p.eos == 0.2);
  }

  TEST_CASE("corpus errors are data errors") {
    const fs::path dir = scratch_dir("bad_corpus");
    CHECK_THROWS_AS(read_corpus((dir / "missing.jsonl").string()), DataError);
    std::ofstream((dir / "bad.jsonl").string()) << "{\"id\": \"a\"\n";
    CHECK_THROWS_WITH_AS(read_corpus((dir / "bad.jsonl").string()), doctest::Contains(":1"), DataError);
    std::ofstream((dir / "empty.jsonl").string()) << "";
    CHECK_THROWS_AS(read_corpus((dir / "empty.jsonl").string()), DataError);
  }

  TEST_CASE("configuration errors name the offending field") {
    CHECK_THROWS_WITH_AS(parse_config(Json::parse(R"({"decode": {"alpha": "big"}})")),
                         doctest::Contains("decode.alpha"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config(Json::parse(R"({"sparsify": {"lambdaa": 0.1}})")),
                         doctest::Contains("sparsify.lambdaa"), ConfigError);
    CHECK_THROWS_AS(parse_config(Json::parse(R"({"decode": {"mode": "sample"}})")), ConfigError);
    CHECK_THROWS_AS(parse_config(Json::parse(R"({"seeds": []})")), ConfigError);
    CHECK_THROWS_AS(parse_config(Json::parse(R"({"decode": {"gamma_apc": 2.0}})")), ConfigError);
  }

  TEST_CASE("configuration round trip") {
    ExperimentConfig cfg;
    cfg.decode.alpha = 0.7;
    cfg.sparsify.cache_mode = CacheMode::kCompacted;
    cfg.seeds = {3, 4};
    const ExperimentConfig back = parse_config(to_json(cfg));
    CHECK(back.decode.alpha == 0.7);
    CHECK(back.sparsify.cache_mode == CacheMode::kCompacted);
    CHECK(back.seeds == std::vector<std::uint64_t>{3, 4});
    CHECK(to_json(back).dump() == to_json(cfg).dump());
  }

  TEST_CASE("dotted overrides") {
    Json doc = Json::object();
    set_path(doc, "decode.alpha", 0.5);
    CHECK(parse_config(doc).decode.alpha == 0.5);
  }

  TEST_CASE("runs are reproducible byte for byte") {
    const fs::path dir = scratch_dir("repro");
    ExperimentConfig cfg;
    cfg.corpus = make_corpus(dir, 30);
    cfg.seeds = {0, 1};
    cfg.threads = 2;
    const ExperimentData data = load_experiment_data(cfg);
    write_results_csv((dir / "a.csv").string(), run_experiment(cfg, data));
    write_results_csv((dir / "b.csv").string(), run_experiment(cfg, data));
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
    write_results_json((dir / "a.json").string(), run_experiment(cfg, data));
    write_results_json((dir / "b.json").string(), run_experiment(cfg, data));
    CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
  }

  TEST_CASE("turning calibration off equals zero calibration strength") {
    const fs::path dir = scratch_dir("sac_off");
    ExperimentConfig cfg = transformer_config(make_corpus(dir, 10));
    cfg.sparsify.l_min = 4;
    const ExperimentData data = load_experiment_data(cfg);
    ExperimentConfig off = cfg;
    off.ablation.sac = false;
    ExperimentConfig zero = cfg;
    zero.sparsify.beta = 0.0;
    const ResultRow a = run_row(off, data, "none", 0.0, 0, nullptr);
    const ResultRow b = run_row(zero, data, "none", 0.0, 0, nullptr);
    CHECK(a.status == "ok");
    CHECK(a.chair == b.chair);
    CHECK(a.recall == b.recall);
    CHECK(a.tokens == b.tokens);
  }

  TEST_CASE("disabled mechanisms reproduce reference metrics") {
    const fs::path dir = scratch_dir("reference_metrics");
    ExperimentConfig cfg = transformer_config(make_corpus(dir, 10));
    cfg.decode.alpha = 0.0;
    cfg.decode.gamma_apc = 0.0;
    cfg.sparsify.sparsity_rate = 1.0;
    cfg.ablation.sac = false;
    const ExperimentData data = load_experiment_data(cfg);
    const ResultRow row = run_row(cfg, data, "none", 0.0, 0, nullptr);
    REQUIRE(row.status == "ok");

    const ToyTransformer model(ToyTransformerConfig{5, 16, 2, 2, 64, 0});
    double chair = 0.0, recall = 0.0;
    for (const CorpusExample& ex : data.corpus) {
      const auto tokens = oracle::reference_full_decode(model, {kBosToken}, ex.image, cfg.decode.max_len);
      std::vector<TokenId> g;
      for (TokenId t : tokens) {
        if (t >= 2 && std::find(g.begin(), g.end(), t) == g.end()) g.push_back(t);
      }
      std::size_t hit = 0;
      for (TokenId t : g) {
        hit += std::count(ex.image.findings.begin(), ex.image.findings.end(), t) > 0 ? 1 : 0;
      }
      chair += g.empty() ? 0.0 : static_cast<double>(g.size() - hit) / static_cast<double>(g.size());
      recall += static_cast<double>(hit) / static_cast<double>(ex.image.findings.size());
    }
    const double n = static_cast<double>(data.corpus.size());
    CHECK(std::fabs(row.chair - chair / n) <= 1e-12);
    CHECK(std::fabs(row.recall - recall / n) <= 1e-12);
  }

  TEST_CASE("sweep grid") {
    const fs::path dir = scratch_dir("sweep");
    ExperimentConfig cfg;
    cfg.corpus = make_corpus(dir, 10);
    cfg.seeds = {0, 1, 2};
    const ExperimentData data = load_experiment_data(cfg);
    std::vector<double> grid;
    for (int i = 0; i < 10; ++i) grid.push_back(0.1 * i);
    const auto rows = sweep(cfg, data, "alpha", grid);
    CHECK(rows.size() == 30);
    for (std::size_t i = 1; i < rows.size(); ++i) {
      CHECK((rows[i - 1].axis_value < rows[i].axis_value ||
             (rows[i - 1].axis_value == rows[i].axis_value && rows[i - 1].seed < rows[i].seed)));
    }
    CHECK(rows[5].config.decode.alpha == rows[5].axis_value);

    ExperimentConfig at = cfg;
    at.decode.alpha = 0.3;
    const auto single = sweep(cfg, data, "alpha", {0.3});
    const auto plain = run_experiment(at, data);
    REQUIRE(single.size() == plain.size());
    for (std::size_t i = 0; i < single.size(); ++i) {
      CHECK(single[i].chair == plain[i].chair);
      CHECK(single[i].recall == plain[i].recall);
    }
    CHECK_THROWS_AS(sweep(cfg, data, "temperature", {1.0}), ConfigError);
    CHECK_THROWS_AS(sweep(cfg, data, "stop_layer", {0.5}), ConfigError);
  }

  TEST_CASE("missing corpus") {
    ExperimentConfig cfg;
    cfg.corpus = (scratch_dir("missing") / "nope.jsonl").string();
    CHECK_THROWS_AS(load_experiment_data(cfg), DataError);
  }

  TEST_CASE("a failing example marks its row as an error") {
    const fs::path dir = scratch_dir("failing");
    ExperimentConfig cfg = transformer_config(make_corpus(dir, 5));
    cfg.model.vocab = 8;  // findings above id 7 are outside the vocabulary
    const ExperimentData data = load_experiment_data(cfg);
    const ResultRow row = run_row(cfg, data, "none", 0.0, 0, nullptr);
    CHECK(row.status == "error");
    CHECK(row.error.find("example 'ex-") != std::string::npos);
    CHECK(std::isnan(row.chair));
  }

  TEST_CASE("histogram") {
    const auto one = histogram({0.5, 0.5, 0.5}, 8);
    REQUIRE(one.size() == 1);
    CHECK(one[0].count == 3);
    CHECK(one[0].fraction == 1.0);
    CHECK(histogram({}, 4).empty());
    const auto two = histogram({0.0, 1.0, 0.2, 0.9}, 2);
    REQUIRE(two.size() == 2);
    CHECK(two[0].count == 2);
    CHECK(two[1].count == 2);
    CHECK(histogram({0.0, 1.0}, 32).size() == 2);
  }

  TEST_CASE("attention statistics") {
    const fs::path dir = scratch_dir("attn");
    ExperimentConfig cfg = transformer_config(make_corpus(dir, 3));
    cfg.decode.max_len = 6;
    const ExperimentData data = load_experiment_data(cfg);
    const AttentionStats stats = attention_stats(cfg, data.corpus[0]);
    REQUIRE(!stats.records.empty());
    std::size_t total = 0;
    for (const ScoreRecord& r : stats.records) {
      total += r.scores.size();
      double s = 0.0;
      for (double v : r.scores) s += v;
      CHECK(std::fabs(s - 1.0) <= 1e-9);
    }
    cfg.attn_stats.scores_csv = (dir / "scores.csv").string();
    cfg.attn_stats.visual_histogram = (dir / "vis.csv").string();
    cfg.attn_stats.text_histogram = (dir / "text.csv").string();
    write_attention_stats(cfg.attn_stats, stats);
    const auto lines = lines_of(dir / "scores.csv");
    CHECK(lines.size() == total + 1);
    double previous = -1.0;
    std::string record;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const std::string rec = lines[i].substr(0, lines[i].find(','));
      const double score = std::stod(lines[i].substr(lines[i].rfind(',') + 1));
      if (rec == record) CHECK(score >= previous);
      record = rec;
      previous = score;
    }

    ExperimentConfig composer;
    CHECK_THROWS_AS(attention_stats(composer, data.corpus[0]), ConfigError);
  }
}
