#pragma once

#include <stdexcept>
#include <string>

namespace netdesign {

/// Input violates a documented invariant (bad topology, loads, costs or settings).
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// The regularized conductance matrix could not be factorized: the support of
/// the conductances leaves loaded nodes disconnected, or it is numerically so.
class DisconnectedNetwork : public std::runtime_error {
 public:
  explicit DisconnectedNetwork(const std::string& what) : std::runtime_error(what) {}
};

/// The over-complete network cannot satisfy the requested failure tolerance.
class InfeasibleRobustness : public std::runtime_error {
 public:
  explicit InfeasibleRobustness(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace netdesign
