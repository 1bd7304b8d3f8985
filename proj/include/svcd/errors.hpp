// Copyright 2026 The svcd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace svcd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (shape mismatch, bad index).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Invalid configuration: bad hyperparameter ranges, unknown keys, dimension mismatches.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (corpus records, image descriptors).
class InputError : public Error {
 public:
  using Error::Error;
};

// Missing or unreadable files.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace svcd
