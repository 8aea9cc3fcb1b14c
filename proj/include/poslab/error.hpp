// Copyright (c) 2026, poslab authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace poslab {

// Every failure raised by the library derives from Error so callers (the CLI
// in particular) can map them to exit codes without catching std::exception.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class LengthError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced by a forward op or seen in a gradient.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// A softmax row whose entries are all masked with the -inf sentinel.
class DegenerateRowError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Training stopped on a non-finite loss.
class DivergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// A loss reduction with no contributing rows (every target ignored).
class EmptyLossError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Bad command line or config key. The CLI maps it to exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace poslab
