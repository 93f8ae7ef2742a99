#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nsm {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed knowledge-base file or inconsistent triple data.
class KbError : public Error {
 public:
  KbError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  explicit KbError(const std::string& what) : Error(what), line_(0) {}

  /// 1-based line number, or 0 when the error is not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Program text that does not follow the grammar.
class ParseError : public Error {
 public:
  ParseError(std::size_t position, const std::string& what)
      : Error("token " + std::to_string(position) + ": " + what), position_(position) {}

  /// 0-based token index where parsing failed.
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// Failure while executing a well-formed program.
class ExecError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration, dataset or checkpoint content.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace nsm
