#pragma once

#include <stdexcept>
#include <string>

namespace elastinv {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A linear solve or factorization failed.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Reading or writing a file failed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Failure inside one stage of an experiment pipeline.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

#define ELASTINV_REQUIRE(cond, ExcType, msg) \
  do {                                       \
    if (!(cond)) throw ExcType(msg);         \
  } while (false)

}  // namespace elastinv
