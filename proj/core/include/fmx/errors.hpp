#pragma once

#include <stdexcept>
#include <string>

namespace fmx {

// Malformed or inconsistent input data, configuration, or arguments.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-convergence, singular systems, degenerate samples.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A pipeline stage was asked to run before its upstream outputs exist.
class StageMissingError : public std::runtime_error {
 public:
  StageMissingError(std::string stage, const std::string& what)
      : std::runtime_error(what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace fmx
