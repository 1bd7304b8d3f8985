// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include "svcd/harness/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "svcd/errors.hpp"
#include "svcd/rng.hpp"

namespace svcd::harness {

namespace {

constexpr TokenId kFirstFinding = 2;

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("generator." + what);
}

bool contains(const std::vector<TokenId>& xs, TokenId x) {
  return std::find(xs.begin(), xs.end(), x) != xs.end();
}

std::string example_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ex-%06zu", i);
  return buf;
}

template <typename T>
T field(const Json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(where + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const Json::exception&) {
    throw DataError(where + ": field '" + std::string(key) + "' has the wrong type");
  }
}

}  // namespace

TokenId distractor_of(const GeneratorConfig& cfg, TokenId trigger) {
  const auto i = static_cast<std::size_t>(trigger - kFirstFinding);
  if (trigger < kFirstFinding || i >= cfg.trigger_pairs) return -1;
  return static_cast<TokenId>(kFirstFinding + static_cast<TokenId>(i + cfg.trigger_pairs));
}

std::vector<CorpusExample> gen_corpus(const GeneratorConfig& cfg) {
  require(cfg.n >= 1, "n: must be at least 1");
  require(cfg.findings >= 4, "findings: must be at least 4");
  require(cfg.findings <= 62, "findings: must be at most 62");
  require(cfg.tokens_per_finding >= 1, "tokens_per_finding: must be at least 1");
  require(cfg.min_findings >= 1, "min_findings: must be at least 1");
  require(cfg.max_findings >= cfg.min_findings, "max_findings: must be >= min_findings");
  require(cfg.max_findings < cfg.findings, "max_findings: must be below findings");
  require(2 * cfg.trigger_pairs <= cfg.findings, "trigger_pairs: needs 2 * pairs <= findings");
  require(cfg.prior_rate >= 0.0 && cfg.prior_rate <= 1.0, "prior_rate: must be in [0, 1]");
  require(cfg.question_rate >= 0.0 && cfg.question_rate <= 1.0,
          "question_rate: must be in [0, 1]");

  std::vector<CorpusExample> corpus;
  corpus.reserve(cfg.n);
  for (std::size_t e = 0; e < cfg.n; ++e) {
    SplitMix64 rng(derive_seed(cfg.seed, e));
    CorpusExample ex;
    ex.id = example_id(e);
    ex.image.tokens_per_finding = cfg.tokens_per_finding;

    const std::size_t span = cfg.max_findings - cfg.min_findings + 1;
    const std::size_t count = cfg.min_findings + static_cast<std::size_t>(rng.below(span));
    std::vector<TokenId> pool(cfg.findings);
    for (std::size_t i = 0; i < cfg.findings; ++i) pool[i] = kFirstFinding + static_cast<TokenId>(i);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(cfg.findings - i));
      std::swap(pool[i], pool[j]);
    }
    ex.image.findings.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(ex.image.findings.begin(), ex.image.findings.end());

    std::vector<TokenId> order = ex.image.findings;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
    }
    for (TokenId f : order) {
      if (contains(ex.report, f)) continue;
      ex.report.push_back(f);
      const TokenId d = distractor_of(cfg, f);
      if (d < 0) continue;
      const bool plant = rng.bernoulli(cfg.prior_rate);
      if (plant && !contains(ex.image.findings, d) && !contains(ex.report, d)) ex.report.push_back(d);
    }
    ex.report.push_back(kEosToken);

    if (rng.bernoulli(cfg.question_rate)) {
      Question q;
      std::vector<TokenId> absent;
      for (std::size_t i = 0; i < cfg.findings; ++i) {
        const TokenId f = kFirstFinding + static_cast<TokenId>(i);
        if (!contains(ex.image.findings, f)) absent.push_back(f);
      }
      const bool ask_present = rng.bernoulli(0.5);
      const std::vector<TokenId>& from = ask_present ? ex.image.findings : absent;
      q.finding = from[static_cast<std::size_t>(rng.below(from.size()))];
      q.tokens = {kBosToken, q.finding};
      q.label = ask_present ? "yes" : "no";
      ex.question = std::move(q);
    }
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

Json to_json(const CorpusExample& ex) {
  Json j;
  j["id"] = ex.id;
  j["image"] = {{"findings", ex.image.findings},
                {"tokens_per_finding", ex.image.tokens_per_finding}};
  j["report"] = ex.report;
  if (ex.question) {
    j["question"] = {{"finding", ex.question->finding},
                     {"tokens", ex.question->tokens},
                     {"label", ex.question->label}};
  }
  return j;
}

CorpusExample example_from_json(const Json& j) {
  if (!j.is_object()) throw DataError("corpus example: expected an object");
  CorpusExample ex;
  ex.id = field<std::string>(j, "id", "corpus example");
  const std::string where = "corpus example '" + ex.id + "'";
  auto image = j.find("image");
  if (image == j.end() || !image->is_object()) throw DataError(where + ": missing image");
  ex.image.findings = field<std::vector<TokenId>>(*image, "findings", where + ".image");
  ex.image.tokens_per_finding =
      field<std::size_t>(*image, "tokens_per_finding", where + ".image");
  if (ex.image.findings.empty() || ex.image.tokens_per_finding == 0) {
    throw DataError(where + ": image must be non-empty");
  }
  ex.report = field<std::vector<TokenId>>(j, "report", where);
  if (auto q = j.find("question"); q != j.end()) {
    Question question;
    question.finding = field<TokenId>(*q, "finding", where + ".question");
    question.tokens = field<std::vector<TokenId>>(*q, "tokens", where + ".question");
    question.label = field<std::string>(*q, "label", where + ".question");
    if (question.label != "yes" && question.label != "no") {
      throw DataError(where + ".question.label: expected 'yes' or 'no'");
    }
    ex.question = std::move(question);
  }
  return ex;
}

void write_corpus(const std::string& path, const std::vector<CorpusExample>& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (const CorpusExample& ex : corpus) out << to_json(ex).dump() << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

std::vector<CorpusExample> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus '" + path + "'");
  std::vector<CorpusExample> corpus;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw DataError(where + ": " + e.what());
    }
    try {
      corpus.push_back(example_from_json(j));
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    if (!ids.insert(corpus.back().id).second) {
      throw DataError(where + ": duplicate id '" + corpus.back().id + "'");
    }
  }
  if (corpus.empty()) throw DataError("corpus '" + path + "' is empty");
  return corpus;
}

PlantedPrior fit_prior(const std::vector<CorpusExample>& corpus, std::size_t findings,
                       double eos_prior) {
  PlantedPrior p;
  p.eos = eos_prior;
  std::vector<double> base_hits(findings, 0.0), base_total(findings, 0.0);
  std::vector<std::vector<double>> hits(findings, std::vector<double>(findings, 0.0));
  std::vector<std::vector<double>> total(findings, std::vector<double>(findings, 0.0));
  auto index = [&](TokenId t) -> long {
    const long i = static_cast<long>(t) - kFirstFinding;
    return i >= 0 && static_cast<std::size_t>(i) < findings ? i : -1;
  };
  for (const CorpusExample& ex : corpus) {
    std::vector<bool> in_image(findings, false), in_report(findings, false);
    for (TokenId f : ex.image.findings) {
      if (index(f) >= 0) in_image[static_cast<std::size_t>(index(f))] = true;
    }
    for (TokenId f : ex.report) {
      if (index(f) >= 0) in_report[static_cast<std::size_t>(index(f))] = true;
    }
    for (std::size_t y = 0; y < findings; ++y) {
      if (in_image[y]) continue;
      base_total[y] += 1.0;
      if (in_report[y]) base_hits[y] += 1.0;
      for (std::size_t t = 0; t < findings; ++t) {
        if (t == y || !in_report[t]) continue;
        total[t][y] += 1.0;
        if (in_report[y]) hits[t][y] += 1.0;
      }
    }
  }
  p.base.assign(findings, 0.0);
  p.links.assign(findings, std::vector<double>(findings, 0.0));
  for (std::size_t y = 0; y < findings; ++y) {
    if (base_total[y] > 0.0) p.base[y] = base_hits[y] / base_total[y];
    for (std::size_t t = 0; t < findings; ++t) {
      if (total[t][y] > 0.0) p.links[t][y] = hits[t][y] / total[t][y];
    }
  }
  return p;
}

}  // namespace svcd::harness
