#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace sumask {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Carries the path of the offending field, e.g. "gold_triples[0].subject".
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error("line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ProviderError : public Error {
 public:
  using Error::Error;
};

// Retryable transport failure (connection reset, 5xx, timeout).
class TransientError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class AuthError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class RateLimitError : public ProviderError {
 public:
  RateLimitError(const std::string& message, std::optional<double> retry_after_s)
      : ProviderError(message), retry_after_s_(retry_after_s) {}
  std::optional<double> retry_after() const noexcept { return retry_after_s_; }

 private:
  std::optional<double> retry_after_s_;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class StorageError : public Error {
 public:
  using Error::Error;
};

class MismatchError : public Error {
 public:
  using Error::Error;
};

class LabelMismatchError : public Error {
 public:
  using Error::Error;
};

class UnknownRelationError : public Error {
 public:
  using Error::Error;
};

class EmptyError : public Error {
 public:
  using Error::Error;
};

}  // namespace sumask
