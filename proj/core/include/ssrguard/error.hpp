#pragma once

#include <stdexcept>
#include <string>

namespace ssrguard {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parameter, configuration value or argument violates its documented invariant.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Integration produced a non-finite state.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, double time_s) : Error(what), time_s_(time_s) {}
  double time_s() const noexcept { return time_s_; }

 private:
  double time_s_;
};

/// Settling did not reach the cycle-over-cycle tolerance within the allowed time.
class SettleTimeout : public Error {
 public:
  SettleTimeout(const std::string& what, double last_delta) : Error(what), last_delta_(last_delta) {}
  double last_cycle_delta() const noexcept { return last_delta_; }

 private:
  double last_delta_;
};

/// Reading or writing a file failed, or its content is malformed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ssrguard
