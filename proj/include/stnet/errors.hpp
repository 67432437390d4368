// Copyright 2026 The STNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace stnet {

/// Anything wrong with input files or their contents.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BadMagicError : public DataError {
 public:
  using DataError::DataError;
};

class TruncatedFileError : public DataError {
 public:
  using DataError::DataError;
};

class DimensionMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class ValueRangeError : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateRangeError : public DataError {
 public:
  using DataError::DataError;
};

/// NaN/Inf loss or other divergence during training.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::string last_good_checkpoint = {})
      : std::runtime_error(what), checkpoint_(std::move(last_good_checkpoint)) {}
  const std::string& last_good_checkpoint() const { return checkpoint_; }

 private:
  std::string checkpoint_;
};

}  // namespace stnet
