#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spdelab {

/// Raised when an argument violates an operation's precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for malformed problem or noise specifications (e.g. nonpositive q).
class InvalidSpec : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A Nemytskii map produced a non-finite value at a collocation node.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(const std::string& what, std::size_t grid_index)
      : std::runtime_error(what + " (grid index " + std::to_string(grid_index) + ")"),
        grid_index_(grid_index) {}
  std::size_t grid_index() const noexcept { return grid_index_; }

 private:
  std::size_t grid_index_;
};

/// A time stepper produced a non-finite state.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidInput(msg);
}

}  // namespace detail
}  // namespace spdelab
