// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "svcd/composer.hpp"
#include "svcd/harness/config.hpp"

namespace svcd::harness {

struct Question {
  TokenId finding = 0;
  std::vector<TokenId> tokens;
  std::string label;  // "yes" | "no"
};

struct CorpusExample {
  std::string id;
  ImageDescriptor image;
  std::vector<TokenId> report;  // finding ids followed by EOS
  std::optional<Question> question;
};

// Finding ids are 2 .. findings + 1. The first `trigger_pairs` findings are
// triggers; trigger i plants distractor i + trigger_pairs, which follows it in
// the report with probability prior_rate unless the image already shows it.
std::vector<CorpusExample> gen_corpus(const GeneratorConfig& cfg);

TokenId distractor_of(const GeneratorConfig& cfg, TokenId trigger);  // -1 when not a trigger

Json to_json(const CorpusExample& ex);
CorpusExample example_from_json(const Json& j);

void write_corpus(const std::string& path, const std::vector<CorpusExample>& corpus);
// DataError on unreadable files, malformed lines or duplicate ids.
std::vector<CorpusExample> read_corpus(const std::string& path);

// Empirical language prior over `findings` finding ids:
//   base[y]     = P(y in report | y not in image)
//   links[t][y] = P(y in report | t in report, y not in image)
PlantedPrior fit_prior(const std::vector<CorpusExample>& corpus, std::size_t findings,
                       double eos_prior);

}  // namespace svcd::harness
