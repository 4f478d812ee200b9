#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace faceq {

/// Base class for every failure raised by the toolkit's modules.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input data failed to parse or validate. Carries the source (usually a
/// file path) and a 1-based line number when one applies (0 otherwise).
class DataError : public Error {
 public:
  DataError(std::string source, std::size_t line, const std::string& message)
      : Error(format(source, line, message)), source_(std::move(source)), line_(line) {}

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& source, std::size_t line,
                            const std::string& message) {
    std::string out = source;
    if (line > 0) out += ":" + std::to_string(line);
    if (!out.empty()) out += ": ";
    return out + message;
  }

  std::string source_;
  std::size_t line_;
};

}  // namespace faceq
