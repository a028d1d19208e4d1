#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dbsa {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user configuration: bad flags, malformed files, rejected requests.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Invalid function argument (empty batch, bad enum name, ...).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A vector with zero norm was given to the cosine metric.
class DegenerateVectorError : public Error {
 public:
  DegenerateVectorError(const std::string& matrix_name, std::size_t row)
      : Error("zero-norm vector at row " + std::to_string(row) + " of " + matrix_name +
              " is undefined under cosine distance"),
        row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Internal inconsistency, e.g. embeddings of different dimensions in one batch.
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// A network request failed in a way that may succeed on retry (429, 5xx, I/O).
class TransientError : public Error {
 public:
  using Error::Error;
};

/// Sampling gave up after exhausting retries on one draw.
class SamplingError : public Error {
 public:
  SamplingError(const std::string& what, std::size_t completed)
      : Error(what), completed_(completed) {}
  /// Number of draws that had completed before the failure.
  std::size_t completed() const noexcept { return completed_; }

 private:
  std::size_t completed_;
};

class EmbeddingError : public Error {
 public:
  using Error::Error;
};

/// No usable neighbors could be obtained for a token.
class NeighborError : public Error {
 public:
  using Error::Error;
};

/// Rank correlation of a constant sequence.
class UndefinedCorrelationError : public Error {
 public:
  using Error::Error;
};

}  // namespace dbsa
