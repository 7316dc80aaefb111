#pragma once

#include <stdexcept>
#include <string>

namespace iclc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (dataset lines, template files, prompt records).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Structurally valid input that breaks a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Bad run configuration. The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class PoolExhausted : public Error {
 public:
  using Error::Error;
};

// Network or server failure that may succeed on retry.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Server-side refusal that retrying cannot fix (e.g. no logprobs support).
class BackendFatal : public Error {
 public:
  using Error::Error;
};

}  // namespace iclc
