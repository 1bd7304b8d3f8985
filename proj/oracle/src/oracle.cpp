// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include "svcd/oracle/oracle.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace svcd::oracle {

namespace {

using Vec = std::vector<double>;

double inner(const Vec& a, const double* b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

Vec apply(const Matrix& m, const Vec& x) {
  Vec out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = inner(x, &m.data()[r * m.cols()]);
  return out;
}

Vec normalise(const Vec& x) {
  double ms = 0.0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(x.size());
  const double scale = 1.0 / std::sqrt(ms + ToyTransformer::kRmsEps);
  Vec out(x);
  for (double& v : out) v *= scale;
  return out;
}

Vec row_of(const Matrix& m, std::size_t r) {
  return Vec(m.data().begin() + static_cast<std::ptrdiff_t>(r * m.cols()),
             m.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * m.cols()));
}

// Hidden state of the last position after running every layer over `inputs`
// with causal attention recomputed from scratch.
Vec last_hidden(const ToyTransformer& model, const std::vector<Vec>& inputs) {
  const ModelDims& dims = model.dims();
  const double root_d = std::sqrt(static_cast<double>(dims.head_dim));
  std::vector<Vec> x = inputs;
  for (const auto& lw : model.layer_weights()) {
    const std::size_t n = x.size();
    std::vector<Vec> xn(n);
    for (std::size_t t = 0; t < n; ++t) xn[t] = normalise(x[t]);
    std::vector<Vec> next(n);
    for (std::size_t t = 0; t < n; ++t) {
      Vec concat;
      for (std::size_t h = 0; h < dims.heads; ++h) {
        const Vec q = apply(lw.wq[h], xn[t]);
        Vec scores(t + 1);
        std::vector<Vec> values(t + 1);
        for (std::size_t j = 0; j <= t; ++j) {
          scores[j] = inner(q, apply(lw.wk[h], xn[j]).data()) / root_d;
          values[j] = apply(lw.wv[h], xn[j]);
        }
        double peak = -std::numeric_limits<double>::infinity();
        for (double s : scores) peak = s > peak ? s : peak;
        double z = 0.0;
        for (double& s : scores) {
          s = std::exp(s - peak);
          z += s;
        }
        Vec head(dims.head_dim, 0.0);
        for (std::size_t j = 0; j <= t; ++j) {
          const double p = scores[j] / z;
          for (std::size_t d = 0; d < dims.head_dim; ++d) head[d] += p * values[j][d];
        }
        concat.insert(concat.end(), head.begin(), head.end());
      }
      Vec y = x[t];
      const Vec o = apply(lw.wo, concat);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += o[i];
      Vec a = apply(lw.w1, normalise(y));
      for (double& v : a) v = v > 0.0 ? v : 0.0;
      const Vec f = apply(lw.w2, a);
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += f[i];
      next[t] = std::move(y);
    }
    x = std::move(next);
  }
  return x.back();
}

}  // namespace

OracleReport compare(std::string instance, double oracle_value, double engine_value,
                     double tolerance) {
  return compare(std::move(instance), Vec{oracle_value}, Vec{engine_value}, tolerance);
}

OracleReport compare(std::string instance, const std::vector<double>& oracle_values,
                     const std::vector<double>& engine_values, double tolerance) {
  if (oracle_values.size() != engine_values.size()) {
    throw std::invalid_argument("oracle compare: length mismatch");
  }
  OracleReport r;
  r.instance = std::move(instance);
  r.tolerance = tolerance;
  if (!oracle_values.empty()) {
    r.oracle_value = oracle_values.front();
    r.engine_value = engine_values.front();
  }
  for (std::size_t i = 0; i < oracle_values.size(); ++i) {
    const double dev = std::fabs(oracle_values[i] - engine_values[i]);
    if (std::isnan(dev)) {
      r.max_deviation = std::numeric_limits<double>::infinity();
    } else if (dev > r.max_deviation) {
      r.max_deviation = dev;
    }
  }
  r.pass = r.max_deviation <= tolerance;
  return r;
}

BruteForceMask brute_force_mask(const std::vector<double>& q,
                                const std::vector<std::vector<double>>& keys,
                                const std::vector<double>& visual, double lambda, std::size_t s) {
  const std::size_t n = keys.size();
  if (n > kMaxEnumeration) throw std::invalid_argument("brute_force_mask: L > 20");
  if (visual.size() != n) throw std::invalid_argument("brute_force_mask: P length != L");
  if (s > n) throw std::invalid_argument("brute_force_mask: S > L");
  Vec g(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double ip = inner(q, keys[i].data());
    g[i] = ip * ip;
  }
  BruteForceMask best;
  bool have = false;
  for (std::uint32_t bits = 0; bits < (1U << n); ++bits) {
    if (static_cast<std::size_t>(__builtin_popcount(bits)) != s) continue;
    std::vector<std::uint8_t> mask(n);
    for (std::size_t i = 0; i < n; ++i) mask[i] = (bits >> i) & 1U;
    double pruned = 0.0;
    double kept = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i]) {
        kept += visual[i];
      } else {
        pruned += g[i];
      }
    }
    const double objective = pruned - lambda * kept;
    if (!have || objective < best.objective ||
        (objective == best.objective && mask < best.mask)) {
      best = BruteForceMask{std::move(mask), objective};
      have = true;
    }
  }
  return best;
}

std::vector<TokenId> reference_full_decode(const ToyTransformer& model,
                                           const std::vector<TokenId>& prompt,
                                           const ImageDescriptor& image, std::size_t max_len) {
  if (prompt.empty()) throw std::invalid_argument("reference_full_decode: empty prompt");
  std::vector<Vec> inputs;
  inputs.push_back(row_of(model.embedding(), static_cast<std::size_t>(prompt[0])));
  for (TokenId f : image.findings) {
    const Vec base = model.visual_base(f);
    for (std::size_t r = 0; r < image.tokens_per_finding; ++r) inputs.push_back(base);
  }
  for (std::size_t i = 1; i < prompt.size(); ++i) {
    inputs.push_back(row_of(model.embedding(), static_cast<std::size_t>(prompt[i])));
  }
  std::vector<TokenId> out;
  while (out.size() < max_len) {
    const Vec logits = apply(model.unembedding(), last_hidden(model, inputs));
    std::size_t best = 0;
    for (std::size_t y = 1; y < logits.size(); ++y) {
      if (logits[y] > logits[best]) best = y;
    }
    if (static_cast<TokenId>(best) == kEosToken) break;
    out.push_back(static_cast<TokenId>(best));
    inputs.push_back(row_of(model.embedding(), best));
  }
  return out;
}

ReferenceClustering reference_clustering(const std::vector<std::vector<double>>& points,
                                         std::size_t k, std::size_t centers) {
  const std::size_t n = points.size();
  if (n == 0 || n > kMaxClusterPoints) {
    throw std::invalid_argument("reference_clustering: need 1..64 points");
  }
  ReferenceClustering out;
  if (n == 1) {
    out.center_of = {0};
    out.centers = {0};
    return out;
  }
  if (k > n - 1) k = n - 1;
  if (centers < 1) centers = 1;
  if (centers > n) centers = n;

  std::vector<std::vector<long double>> dist(n, std::vector<long double>(n, 0.0L));
  long double widest = 0.0L;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      long double acc = 0.0L;
      for (std::size_t c = 0; c < points[i].size(); ++c) {
        const long double d = static_cast<long double>(points[i][c]) - points[j][c];
        acc += d * d;
      }
      dist[i][j] = std::sqrt(acc);
      if (dist[i][j] > widest) widest = dist[i][j];
    }
  }

  std::vector<long double> density(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<long double> others;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) others.push_back(dist[i][j]);
    }
    // Selection sort of the k smallest: slow, obvious, independent.
    long double total = 0.0L;
    for (std::size_t t = 0; t < k; ++t) {
      std::size_t m = t;
      for (std::size_t u = t + 1; u < others.size(); ++u) {
        if (others[u] < others[m]) m = u;
      }
      std::swap(others[t], others[m]);
      total += others[t];
    }
    density[i] = 1.0L / (1e-8L + total / static_cast<long double>(k));
  }

  std::vector<long double> gamma(n);
  for (std::size_t i = 0; i < n; ++i) {
    long double sep = -1.0L;
    for (std::size_t j = 0; j < n; ++j) {
      if (density[j] > density[i] && (sep < 0.0L || dist[i][j] < sep)) sep = dist[i][j];
    }
    gamma[i] = density[i] * (sep < 0.0L ? widest : sep);
  }

  std::vector<long> label(n, -1);
  std::vector<bool> taken(n, false);
  for (std::size_t c = 0; c < centers; ++c) {
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i] && (pick == n || gamma[i] > gamma[pick])) pick = i;
    }
    taken[pick] = true;
    label[pick] = static_cast<long>(pick);
    out.centers.push_back(pick);
  }

  std::vector<bool> visited(n, false);
  for (std::size_t step = 0; step < n; ++step) {
    std::size_t i = n;
    for (std::size_t u = 0; u < n; ++u) {
      if (!visited[u] && (i == n || density[u] > density[i])) i = u;
    }
    if (label[i] < 0) {
      std::size_t nearest = n;
      for (std::size_t j = 0; j < n; ++j) {
        if (visited[j] && label[j] >= 0 && (nearest == n || dist[i][j] < dist[i][nearest])) {
          nearest = j;
        }
      }
      if (nearest == n) {
        for (std::size_t c : out.centers) {
          if (nearest == n || dist[i][c] < dist[i][nearest] ||
              (dist[i][c] == dist[i][nearest] && c < nearest)) {
            nearest = c;
          }
        }
      }
      label[i] = label[nearest];
    }
    visited[i] = true;
  }
  out.center_of.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.center_of[i] = static_cast<std::size_t>(label[i]);
  return out;
}

}  // namespace svcd::oracle
