// Copyright 2026 The NWB Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace nwb {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  /// Stable short tag used in machine-readable error reports.
  virtual const char* kind() const noexcept { return "error"; }
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invalid_argument"; }
};

/// A numeric failure (non-finite loss, degenerate statistic, ...).
class NumericError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numeric"; }
};

/// Filesystem / stream failures.
class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

/// Base for on-disk format problems.
class FormatError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "format"; }
};

class VersionMismatch : public FormatError {
 public:
  using FormatError::FormatError;
  const char* kind() const noexcept override { return "version_mismatch"; }
};

class TruncatedFile : public FormatError {
 public:
  using FormatError::FormatError;
  const char* kind() const noexcept override { return "truncated"; }
};

class SchemaViolation : public FormatError {
 public:
  using FormatError::FormatError;
  const char* kind() const noexcept override { return "schema"; }
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

}  // namespace detail
}  // namespace nwb
