#pragma once

#include <stdexcept>
#include <string>

namespace qmp {

// Shape or index mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Structural precondition failure (non-Hermitian data, malformed problem, ...).
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// Numerical failure at runtime (non-convergence, breakdown).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Matrix required to be positive (semi)definite is not.
class NotPsdError : public NumericalError {
 public:
  explicit NotPsdError(const std::string& what) : NumericalError(what) {}
};

// Problem (or one of its constraints) detected as infeasible.
class InfeasibleError : public NumericalError {
 public:
  explicit InfeasibleError(const std::string& what) : NumericalError(what) {}
};

// Relaxation solved but no feasible matrix solution could be extracted.
// Carries the relaxation lower bound and the smallest violation seen.
class RecoveryError : public NumericalError {
 public:
  RecoveryError(const std::string& what, double bound, double violation)
      : NumericalError(what), lower_bound(bound), best_violation(violation) {}
  double lower_bound;
  double best_violation;
};

}  // namespace qmp
