#pragma once

#include <stdexcept>
#include <string>

namespace drtsar {

/// Input outside the mathematical domain of a scattering formula.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Caller broke a documented precondition (bad indices, weights off the simplex, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed or unreadable input file (mesh, parameter table, raster, config).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace drtsar
