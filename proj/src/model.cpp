// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include "svcd/model.hpp"

#include <algorithm>

namespace svcd {

std::vector<AttentionResult> FullAttention::attend(KvCache& cache, std::size_t layer,
                                                   std::span<const Vector> queries) {
  LayerCache& lc = cache.layer(layer);
  std::vector<AttentionResult> out;
  out.reserve(queries.size());
  for (std::size_t h = 0; h < queries.size(); ++h) out.push_back(lc.masked_attention(h, queries[h]));
  return out;
}

bool Model::is_finding(TokenId t) const {
  const auto f = finding_vocabulary();
  return std::find(f.begin(), f.end(), t) != f.end();
}

}  // namespace svcd
