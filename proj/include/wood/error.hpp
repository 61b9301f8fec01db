#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wood {

/// Process exit codes used by the command-line front end.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kNumeric = 3,
};

/// Root of the library's exception hierarchy. Every error knows which exit
/// code the CLI should report for it.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code)
      : std::runtime_error(what), code_(code) {}

  ExitCode exit_code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what)
      : Error("dimension error: " + what, ExitCode::kData) {}
};

class IndexError : public Error {
 public:
  explicit IndexError(const std::string& what)
      : Error("index error: " + what, ExitCode::kData) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what)
      : Error("input error: " + what, ExitCode::kData) {}
};

class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& what)
      : Error("capacity error: " + what, ExitCode::kData) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error("config error: " + what, ExitCode::kUsage) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error("numeric error: " + what, ExitCode::kNumeric) {}
};

/// Malformed file contents. `offset` is the byte position where parsing
/// stopped.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error("format error at byte " + std::to_string(offset) + ": " + what,
              ExitCode::kData),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace wood
