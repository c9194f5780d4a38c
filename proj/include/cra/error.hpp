#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cra {

enum class ErrorKind {
  syntax,
  validation,
  unknown_proposition,
  counter_underflow,
  counter_overflow,
  epsilon_loop,
  terminal_step,
  nondeterministic,
  not_constant,
  non_total,
  unknown_symbol,
  bad_config,
  episode_over,
  cap_exceeded,
  non_convergence,
  dimension_mismatch,
  non_finite_loss,
  io,
};

std::string_view to_string(ErrorKind kind);

/// Base exception for every failure raised by the library. The kind lets
/// callers (and tests) branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Parse failure with a position. `offset` is a byte offset into the text
/// handed to the parser; line/column are 1-based and 0 when not applicable.
class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& message, std::size_t offset, std::size_t line = 0,
              std::size_t column = 0);

  std::size_t offset() const noexcept { return offset_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t offset_;
  std::size_t line_;
  std::size_t column_;
};

}  // namespace cra
