#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ergodic {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An operator needed a derivative order the observable or model cannot supply.
class InsufficientOrderError : public Error {
 public:
  using Error::Error;
};

/// The chain left the finite region (non-finite coordinate or sup-norm above 1e12).
class DivergenceError : public Error {
 public:
  DivergenceError(std::uint64_t step, const std::string& what)
      : Error("divergence at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::uint64_t step() const noexcept { return step_; }

 private:
  std::uint64_t step_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

}  // namespace ergodic
