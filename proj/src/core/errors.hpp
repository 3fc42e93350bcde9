#pragma once

#include <stdexcept>
#include <string>

namespace tempscale {

// Error categories double as process exit codes and C API status codes:
// 2 = configuration / validation, 3 = training divergence, 4 = I/O.
enum class ErrorKind : int {
  config = 2,
  divergence = 3,
  io = 4,
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

// Shape mismatch between tensors (e.g. matmul inner dimensions).
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(ErrorKind::config, "dimension error: " + msg) {}
};

// Parameter outside its mathematical domain (e.g. temperature <= 0).
struct DomainError : Error {
  explicit DomainError(const std::string& msg) : Error(ErrorKind::config, "domain error: " + msg) {}
};

// API misuse (bad argument combination, empty batch, non-scalar backward root).
struct UsageError : Error {
  explicit UsageError(const std::string& msg) : Error(ErrorKind::config, "usage error: " + msg) {}
};

// Index out of range (e.g. class label >= number of classes).
struct IndexError : Error {
  explicit IndexError(const std::string& msg) : Error(ErrorKind::config, "index error: " + msg) {}
};

// Invalid configuration file contents (unknown key, missing field, bad value).
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(ErrorKind::config, "config error: " + msg) {}
};

// Malformed data file (bad magic, truncation, count mismatch).
struct FormatError : Error {
  explicit FormatError(const std::string& msg) : Error(ErrorKind::io, "format error: " + msg) {}
};

// Filesystem-level failure.
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(ErrorKind::io, "i/o error: " + msg) {}
};

// Training loss became non-finite.
struct DivergenceError : Error {
  explicit DivergenceError(const std::string& msg) : Error(ErrorKind::divergence, "divergence: " + msg) {}
};

}  // namespace tempscale
