// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#include "svcd/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "svcd/errors.hpp"

namespace svcd {

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) {
    cols_ = values.size();
  }
  if (values.size() != cols_) {
    throw ContractViolation("Matrix::append_row: row length " + std::to_string(values.size()) +
                            " != cols " + std::to_string(cols_));
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

void Matrix::retain_rows(std::span<const std::uint8_t> keep) {
  if (keep.size() != rows_) {
    throw ContractViolation("Matrix::retain_rows: flag count != rows");
  }
  std::size_t out = 0;
  for (std::size_t r = 0; r < rows_; ++r) {
    if (!keep[r]) continue;
    if (out != r) {
      std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(r * cols_), cols_,
                  data_.begin() + static_cast<std::ptrdiff_t>(out * cols_));
    }
    ++out;
  }
  rows_ = out;
  data_.resize(rows_ * cols_);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ContractViolation("dot: length mismatch (" + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()) + ")");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

Vector stable_softmax(std::span<const double> x) {
  double max = kNegInf;
  for (double v : x) {
    if (v > max) max = v;
  }
  if (!(max > kNegInf)) {
    throw ContractViolation("stable_softmax: empty support");
  }
  Vector out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] == kNegInf ? 0.0 : std::exp(x[i] - max);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

Vector log_softmax(std::span<const double> x) {
  double max = kNegInf;
  for (double v : x) {
    if (v > max) max = v;
  }
  if (!(max > kNegInf)) {
    throw ContractViolation("log_softmax: empty support");
  }
  double total = 0.0;
  for (double v : x) {
    if (v != kNegInf) total += std::exp(v - max);
  }
  const double lse = max + std::log(total);
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] == kNegInf ? kNegInf : x[i] - lse;
  return out;
}

Vector matvec(const Matrix& m, std::span<const double> v) {
  if (m.cols() != v.size()) {
    throw ContractViolation("matvec: cols " + std::to_string(m.cols()) + " != vector length " +
                            std::to_string(v.size()));
  }
  Vector out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), v);
  return out;
}

std::size_t argmax(std::span<const double> x) {
  if (x.empty()) throw ContractViolation("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (x[i] > x[best]) best = i;
  }
  return best;
}

double sum(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v;
  return acc;
}

bool all_finite(std::span<const double> x) {
  for (double v : x) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace svcd
