#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bfm {

// Shape/extent disagreement between operands.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of the operation.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Invalid static configuration (model dims, objective pairing, sampler params).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// API contract violated by the caller (e.g. backward on a non-scalar root).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Malformed input file; carries the byte offset where parsing failed.
struct FormatError : std::runtime_error {
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
  std::size_t byte_offset;
};

// Non-finite state during ODE integration; carries the failing step.
struct IntegrationDivergence : std::runtime_error {
  IntegrationDivergence(const std::string& what, int step)
      : std::runtime_error(what + " (integration step " + std::to_string(step) + ")"),
        step(step) {}
  int step;
};

}  // namespace bfm
