// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Dense 64-bit primitives shared by every module. All reductions accumulate
// left to right so repeated runs are bit-identical.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace svcd {

using Vector = std::vector<double>;
using Logits = std::vector<double>;

// Sole sentinel for masked logits and pruned scores.
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  // Appends one row; its length must equal cols(). An empty matrix with
  // cols() == 0 adopts the row's length.
  void append_row(std::span<const double> values);

  // Keeps only the rows whose flag is non-zero, preserving order.
  void retain_rows(std::span<const std::uint8_t> keep);

  void reserve_rows(std::size_t rows) { data_.reserve(rows * cols_); }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);

// Max-subtracted softmax. Entries equal to -inf get probability 0.
// Throws ContractViolation("empty support") when no entry is finite.
Vector stable_softmax(std::span<const double> x);

// log(softmax(x)); -inf entries stay -inf.
Vector log_softmax(std::span<const double> x);

Vector matvec(const Matrix& m, std::span<const double> v);

// Index of the largest entry; the lowest index wins ties. Input must be non-empty.
std::size_t argmax(std::span<const double> x);

double sum(std::span<const double> x);

// True when every entry is finite (no NaN, no infinities).
bool all_finite(std::span<const double> x);

}  // namespace svcd
