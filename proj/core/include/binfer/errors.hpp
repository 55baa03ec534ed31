#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace binfer {

/// Raised when an iterative procedure (chain, fit, sampler) leaves the finite
/// regime; carries the 1-based step at which it happened.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

}  // namespace binfer
