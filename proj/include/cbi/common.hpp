#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cbi {

// Input that violates an operation's contract: shape/dimension mismatches,
// out-of-range indexes, malformed sizes.
class InvalidInputError : public std::runtime_error {
 public:
  explicit InvalidInputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally valid pieces wired together in an unsupported way, e.g. a
// propagate-policy layer reading the network input.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class CalibrationError : public std::runtime_error {
 public:
  explicit CalibrationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Parse failure in a text or binary artifact. Carries the file and the byte
// offset where parsing stopped.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string file, std::size_t byte_offset, const std::string& msg)
      : std::runtime_error(file + ":" + std::to_string(byte_offset) + ": " + msg),
        file_(std::move(file)),
        byte_offset_(byte_offset) {}

  const std::string& file() const { return file_; }
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::string file_;
  std::size_t byte_offset_;
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

inline int floor_div(int a, int b) {
  int q = a / b;
  int r = a % b;
  return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}

inline int ceil_div(int a, int b) { return -floor_div(-a, b); }

}  // namespace cbi
