#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace weaklab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. line() is 1-based, 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Inputs that parse but violate a domain invariant (duplicate id, unknown
// label, bad config value).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Failure talking to a language-model backend. Transient failures may be
// retried; permanent ones (bad request, unknown verbalizer) may not.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool transient) : Error(what), transient_(transient) {}

  bool transient() const { return transient_; }

 private:
  bool transient_;
};

class TrainError : public Error {
 public:
  using Error::Error;
};

}  // namespace weaklab
