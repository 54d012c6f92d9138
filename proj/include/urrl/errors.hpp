#pragma once

#include <stdexcept>
#include <string>

namespace urrl {

// Shape or broadcasting mismatch between tensor operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller broke a documented precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Math domain violation (log/sqrt of a negative value).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed dataset, checkpoint, embedding or config input.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid missing-view protocol parameters.
class ProtocolError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Training produced a non-finite loss term.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace urrl
