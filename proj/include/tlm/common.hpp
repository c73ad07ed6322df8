#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

// The library is normally built with 32-bit floats. A second copy built with
// TLM_REAL_DOUBLE lives in its own inline namespace so both can be linked into
// one binary; the 64-bit copy is what the finite-difference checks run on.
#if defined(TLM_REAL_DOUBLE)
#define TLM_BEGIN_NAMESPACE namespace tlm { inline namespace f64 {
#else
#define TLM_BEGIN_NAMESPACE namespace tlm { inline namespace f32 {
#endif
#define TLM_END_NAMESPACE } }

TLM_BEGIN_NAMESPACE

#if defined(TLM_REAL_DOUBLE)
using real = double;
#else
using real = float;
#endif

using TokenId = std::int32_t;

/// Base of every error the library throws. `kind()` is a short stable tag
/// used by the CLI to build its one-line diagnostics.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "shape"; }
};

/// Malformed input data: corpora, token ids, masks, files.
class DataError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "data"; }
};

/// Unreadable or inconsistent serialized artifact (checkpoint, vocab, merges).
class FormatError : public DataError {
 public:
  using DataError::DataError;
  const char* kind() const noexcept override { return "format"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

/// NaN/Inf detected in a forward or backward pass, or a non-finite loss.
class NumericError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numeric"; }
};

/// Misuse of an API (e.g. backward twice on one tape).
class UsageError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "usage"; }
};

TLM_END_NAMESPACE
