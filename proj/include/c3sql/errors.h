#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace c3sql {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. byte_offset is where the JSON parser gave up.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : Error(what), byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

// A loaded schema or dataset record violates a structural invariant.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Bad configuration; the CLI maps this to exit status 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// The environment is missing something the run needs (database file, ...).
class EnvironmentError : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  using Error::Error;
  virtual bool retryable() const { return false; }
};

class AuthenticationError : public BackendError {
 public:
  using BackendError::BackendError;
};

class RateLimitError : public BackendError {
 public:
  using BackendError::BackendError;
  bool retryable() const override { return true; }
};

class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
  bool retryable() const override { return true; }
};

class CacheMissError : public BackendError {
 public:
  explicit CacheMissError(std::string fingerprint)
      : BackendError("no recorded response for fingerprint " + fingerprint),
        fingerprint_(std::move(fingerprint)) {}
  const std::string& fingerprint() const { return fingerprint_; }

 private:
  std::string fingerprint_;
};

// Every table-recall sample came back empty.
class LinkingFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace c3sql
