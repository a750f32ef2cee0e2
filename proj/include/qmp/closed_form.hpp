#pragma once

// Closed-form and semi-closed-form solvers for the easy QMP regimes:
//  * unconstrained (and weighted) minimization, X = -A0^{-1} B0
//  * a single trace power constraint, solved through the KKT system with a
//    scalar multiplier found by bisection on the monotone power curve g(mu).

#include <cmath>
#include <cstddef>
#include <limits>

#include "qmp/errors.hpp"
#include "qmp/matrix.hpp"

namespace qmp {

// Global minimizer of Tr(X^H A0 X) + 2 Re{Tr(B0^H X)} + c for A0 > 0.
inline CMatrix solve_unconstrained(const CMatrix& a0, const CMatrix& b0) {
  if (!is_positive_definite(a0))
    throw NotPsdError("solve_unconstrained: A0 is not positive definite");
  return -hermitian_solve(a0, b0);
}

// Weighted form Tr(W X^H A0 X) + 2 Re{Tr(W^H B0^H X)} + c. The solution set
// depends on W only through its range; X = -A0^{-1} B0 always satisfies the
// optimality condition A0 X W = -B0 W.
inline CMatrix solve_weighted(const CMatrix& a0, const CMatrix& b0, const CMatrix& w) {
  if (!is_positive_definite(a0))
    throw NotPsdError("solve_weighted: A0 is not positive definite");
  if (!is_positive_semidefinite(w))
    throw NotPsdError("solve_weighted: W is not positive semi-definite");
  return -hermitian_solve(a0, b0);
}

// min Tr(X^H A0 X) + 2 Re{Tr(B0^H X)} + c0  s.t.  Tr(X^H A1 X) <= P.
// A1 must be positive definite. A0 may be positive semi-definite: zero modes
// of A0 (in the A1 metric) are handled through the pseudo-inverse, which is
// what the relay subproblems need when all equalizers are zero.
struct SingleConstraintInstance {
  CMatrix A0;
  CMatrix B0;
  double c0 = 0.0;
  CMatrix A1;
  double P = 0.0;
};

struct KKTDiagnostics {
  double mu = 0.0;
  double stationarity_residual = 0.0;
  double primal_violation = 0.0;
  double complementarity = 0.0;
};

struct SingleConstraintResult {
  CMatrix X;
  KKTDiagnostics kkt;
  double objective = 0.0;
  double constraint_value = 0.0;  // Tr(X^H A1 X)
};

namespace detail {

// Spectral data shared by every g(mu) evaluation of one instance:
// with T = A1^{-1/2} and T A0 T = Q diag(lambda) Q^H,
//   g(mu) = sum_k w_k / (lambda_k + mu)^2,
//   X(mu) = -T Q diag(1/(lambda_k + mu)) Q^H T B0,
// where w_k are the squared row norms of Q^H T B0.
struct PowerProfile {
  std::vector<double> lambda;
  std::vector<double> weight;
  CMatrix t;       // A1^{-1/2}
  CMatrix q;       // eigenvectors of T A0 T
  CMatrix coeff;   // Q^H T B0
  double lambda_floor = 0.0;
};

inline PowerProfile build_profile(const SingleConstraintInstance& inst) {
  if (inst.A0.rows() != inst.A0.cols() || inst.A1.rows() != inst.A1.cols() ||
      inst.A0.rows() != inst.A1.rows() || inst.B0.rows() != inst.A0.rows())
    throw DimensionError("single constraint: inconsistent shapes");
  if (!is_positive_definite(inst.A1))
    throw NotPsdError("single constraint: A1 is not positive definite");

  PowerProfile prof;
  prof.t = psd_inv_sqrt(inst.A1);
  const CMatrix s = hermitian_part(prof.t * hermitian_part(inst.A0) * prof.t);
  HermitianEig eig = hermitian_eig(s);
  const double scale = std::max(1.0, std::abs(eig.eigenvalues.front()));
  if (eig.eigenvalues.back() < -1e-8 * scale)
    throw NotPsdError("single constraint: A0 is not positive semi-definite");
  prof.lambda = eig.eigenvalues;
  for (auto& l : prof.lambda) l = std::max(l, 0.0);
  prof.q = eig.eigenvectors;
  prof.coeff = adjoint(prof.q) * (prof.t * inst.B0);
  prof.weight.resize(prof.lambda.size());
  for (std::size_t k = 0; k < prof.lambda.size(); ++k) {
    double w = 0.0;
    for (std::size_t j = 0; j < prof.coeff.cols(); ++j) w += std::norm(prof.coeff(k, j));
    prof.weight[k] = w;
  }
  prof.lambda_floor = 1e-12 * scale;
  return prof;
}

inline double profile_g(const PowerProfile& prof, double mu) {
  double g = 0.0;
  for (std::size_t k = 0; k < prof.lambda.size(); ++k) {
    const double den = prof.lambda[k] + mu;
    if (den <= prof.lambda_floor) {
      if (prof.weight[k] > 1e-24) return std::numeric_limits<double>::infinity();
      continue;  // zero mode with no excitation
    }
    g += prof.weight[k] / (den * den);
  }
  return g;
}

inline CMatrix profile_x(const PowerProfile& prof, double mu) {
  CMatrix scaled = prof.coeff;
  for (std::size_t k = 0; k < prof.lambda.size(); ++k) {
    const double den = prof.lambda[k] + mu;
    const double inv = (den <= prof.lambda_floor) ? 0.0 : 1.0 / den;
    for (std::size_t j = 0; j < scaled.cols(); ++j) scaled(k, j) *= inv;
  }
  return -(prof.t * (prof.q * scaled));
}

}  // namespace detail

// Transmit power Tr(X(mu)^H A1 X(mu)) of the KKT candidate
// X(mu) = -(A0 + mu A1)^{-1} B0. Monotonically decreasing in mu.
inline double g_mu(const SingleConstraintInstance& inst, double mu) {
  if (mu < 0.0) throw std::invalid_argument("g_mu: mu must be non-negative");
  return detail::profile_g(detail::build_profile(inst), mu);
}

inline SingleConstraintResult solve_single_constraint(const SingleConstraintInstance& inst,
                                                      double tol = 1e-8) {
  if (!(tol > 0.0)) throw std::invalid_argument("solve_single_constraint: tol must be > 0");
  if (!(inst.P > 0.0))
    throw std::invalid_argument("solve_single_constraint: power budget must be > 0");

  const detail::PowerProfile prof = detail::build_profile(inst);
  const double target = inst.P;
  const double gtol = tol * std::max(1.0, target);

  double mu = 0.0;
  if (detail::profile_g(prof, 0.0) > target) {
    // Bracket: g decreases to zero, so doubling finds g(hi) <= P.
    double hi = 1.0;
    int guard = 0;
    while (detail::profile_g(prof, hi) > target) {
      hi *= 2.0;
      if (++guard > 300)
        throw NumericalError("solve_single_constraint: failed to bracket the multiplier");
    }
    double lo = 0.0;
    double feasible = hi;  // g(feasible) <= P
    for (int it = 0; it < 300; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double gm = detail::profile_g(prof, mid);
      if (gm > target) {
        lo = mid;
      } else {
        hi = mid;
        feasible = mid;
        if (target - gm <= gtol && hi - lo <= tol * std::max(1.0, hi)) break;
      }
      if (hi - lo <= 1e-16 * std::max(1.0, hi)) break;
    }
    mu = feasible;
  }

  SingleConstraintResult res;
  res.X = detail::profile_x(prof, mu);
  res.constraint_value = trace(adjoint(res.X) * inst.A1 * res.X).real();
  res.objective = trace(adjoint(res.X) * hermitian_part(inst.A0) * res.X).real() +
                  2.0 * trace_product(adjoint(inst.B0), res.X).real() + inst.c0;
  res.kkt.mu = mu;
  const CMatrix grad = hermitian_part(inst.A0) * res.X + mu * (inst.A1 * res.X) + inst.B0;
  res.kkt.stationarity_residual = frobenius_norm(grad);
  res.kkt.primal_violation = std::max(0.0, res.constraint_value - inst.P);
  res.kkt.complementarity = std::abs(mu * (res.constraint_value - inst.P));
  return res;
}

}  // namespace qmp
