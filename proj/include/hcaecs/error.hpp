#pragma once

#include <stdexcept>
#include <string>

namespace hcaecs {

// Every failure the library reports derives from Error. The category decides
// the CLI exit code.
enum class ErrorCategory { config, data, numeric, logic };

class Error : public std::runtime_error {
public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

private:
  ErrorCategory category_;
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

// Wrong dimensions, sizes, or counts.
class ShapeError : public Error {
public:
  explicit ShapeError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

class ParseError : public Error {
public:
  ParseError(const std::string& what, std::size_t line)
      : Error(ErrorCategory::data, "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

// Input matrices that break a precondition (asymmetric, NaN, ...).
class ValidationError : public Error {
public:
  explicit ValidationError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

class NumericError : public Error {
public:
  explicit NumericError(const std::string& what) : Error(ErrorCategory::numeric, what) {}
};

class LogicError : public Error {
public:
  explicit LogicError(const std::string& what) : Error(ErrorCategory::logic, what) {}
};

// 0 success, 2 config, 3 data, 4 numeric.
inline int exit_code(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::data: return 3;
    case ErrorCategory::numeric: return 4;
    case ErrorCategory::logic: return 3;
  }
  return 1;
}

}  // namespace hcaecs
