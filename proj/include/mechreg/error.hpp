#pragma once

#include <stdexcept>
#include <string>

namespace mechreg {

enum class ErrorKind { shape, domain, parameter, data, config, numerical, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error(ErrorKind::shape, w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(ErrorKind::domain, w) {}
};
struct ParameterError : Error {
  explicit ParameterError(const std::string& w) : Error(ErrorKind::parameter, w) {}
};
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(ErrorKind::data, w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorKind::config, w) {}
};
struct NumericalError : Error {
  explicit NumericalError(const std::string& w) : Error(ErrorKind::numerical, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::io, w) {}
};

/// Process exit code for an error kind: 2 usage, 3 data, 4 numerical failure.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parameter:
    case ErrorKind::config:
      return 2;
    case ErrorKind::numerical:
      return 4;
    default:
      return 3;
  }
}

}  // namespace mechreg
