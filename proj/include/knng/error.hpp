#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace knng {

enum class ErrorKind {
  config,    // bad arguments or option combinations
  format,    // malformed input data
  resource,  // memory budget exceeded
  internal,  // broken invariant inside the engine
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::format: return "format";
    case ErrorKind::resource: return "resource";
    case ErrorKind::internal: return "internal";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

/// Input data error. `position` is a flat payload offset for binary data
/// and a 1-based line number for text data.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t position)
      : Error(ErrorKind::format, what + " (at " + std::to_string(position) + ")"),
        position_(position) {}

  std::uint64_t position() const noexcept { return position_; }

 private:
  std::uint64_t position_;
};

class ResourceError : public Error {
 public:
  explicit ResourceError(const std::string& what) : Error(ErrorKind::resource, what) {}
};

class InternalError : public Error {
 public:
  explicit InternalError(const std::string& what) : Error(ErrorKind::internal, what) {}
};

}  // namespace knng
