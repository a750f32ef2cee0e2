#pragma once

// Quadratic matrix (QM) functions and QMP problems: evaluation, validation,
// classification, and the structural transforms (Omega vectorization,
// homogenization, whitening) the solver paths build on.
//
// A QM function of a complex n x r matrix X is
//   f(X) = Tr(D X^H A X) + 2 Re{Tr(B^H X)} + c
// with Hermitian A (n x n), Hermitian D (r x r), B in C^{n x r}, real c.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "qmp/errors.hpp"
#include "qmp/matrix.hpp"

namespace qmp {

struct QMFunction {
  CMatrix A;
  CMatrix B;
  double c = 0.0;
  CMatrix D;

  std::size_t n() const { return A.rows(); }
  std::size_t r() const { return D.rows(); }

  static QMFunction make(CMatrix a, CMatrix b, double c, CMatrix d) {
    return QMFunction{std::move(a), std::move(b), c, std::move(d)};
  }
  // Type-2 convenience: D = I inferred from B's column count.
  static QMFunction type2(CMatrix a, CMatrix b, double c) {
    const std::size_t r = b.cols();
    return QMFunction{std::move(a), std::move(b), c, CMatrix::identity(r)};
  }
};

struct QMPProblem {
  std::size_t n = 0;
  std::size_t r = 0;
  QMFunction objective;
  std::vector<QMFunction> inequalities;  // each f_i(X) <= 0
  std::vector<QMFunction> equalities;    // each f_j(X) == 0
};

enum class ProblemTag { Unconstrained, SingleTraceConstraint, Convex, General };

struct ProblemClass {
  ProblemTag tag = ProblemTag::General;
  bool type2 = false;
};

inline const char* to_string(ProblemTag t) {
  switch (t) {
    case ProblemTag::Unconstrained: return "UNCONSTRAINED";
    case ProblemTag::SingleTraceConstraint: return "SINGLE_TRACE_CONSTRAINT";
    case ProblemTag::Convex: return "CONVEX";
    case ProblemTag::General: return "GENERAL";
  }
  return "?";
}

inline double evaluate(const QMFunction& f, const CMatrix& x) {
  if (x.rows() != f.n() || x.cols() != f.r())
    throw DimensionError("evaluate: X must be " + std::to_string(f.n()) + "x" +
                         std::to_string(f.r()));
  const CMatrix xhax = adjoint(x) * f.A * x;  // r x r
  const cplx quad = trace_product(f.D, xhax);
  const cplx lin = trace_product(adjoint(f.B), x);
  return quad.real() + 2.0 * lin.real() + f.c;
}

namespace detail {

inline bool all_finite(const CMatrix& m) {
  for (const auto& v : m.entries())
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

inline void validate_function(const QMFunction& f, std::size_t n, std::size_t r,
                              const std::string& name, std::vector<std::string>& out) {
  if (f.A.rows() != n || f.A.cols() != n)
    out.push_back(name + ".A: expected " + std::to_string(n) + "x" + std::to_string(n));
  if (f.B.rows() != n || f.B.cols() != r)
    out.push_back(name + ".B: expected " + std::to_string(n) + "x" + std::to_string(r));
  if (f.D.rows() != r || f.D.cols() != r)
    out.push_back(name + ".D: expected " + std::to_string(r) + "x" + std::to_string(r));
  if (f.A.square() && !is_hermitian(f.A, 1e-10)) out.push_back(name + ".A: not Hermitian");
  if (f.D.square() && !is_hermitian(f.D, 1e-10)) out.push_back(name + ".D: not Hermitian");
  if (!all_finite(f.A) || !all_finite(f.B) || !all_finite(f.D) || !std::isfinite(f.c))
    out.push_back(name + ": non-finite entries");
}

}  // namespace detail

// Diagnostic check of all shape and Hermitian invariants. Empty result means
// the problem is well formed.
inline std::vector<std::string> validate(const QMPProblem& p) {
  std::vector<std::string> out;
  detail::validate_function(p.objective, p.n, p.r, "objective", out);
  for (std::size_t i = 0; i < p.inequalities.size(); ++i)
    detail::validate_function(p.inequalities[i], p.n, p.r,
                              "inequality[" + std::to_string(i) + "]", out);
  for (std::size_t j = 0; j < p.equalities.size(); ++j)
    detail::validate_function(p.equalities[j], p.n, p.r,
                              "equality[" + std::to_string(j) + "]", out);
  return out;
}

inline void require_valid(const QMPProblem& p) {
  const auto v = validate(p);
  if (!v.empty()) throw ValidationError("invalid QMP problem: " + v.front());
}

namespace detail {

inline bool is_identity(const CMatrix& d, double tol = 1e-10) {
  if (!d.square()) return false;
  return frobenius_norm(d - CMatrix::identity(d.rows())) <= tol;
}

inline bool psd_within(const CMatrix& a, double rel = 1e-9) {
  if (a.rows() == 0) return true;
  return min_eigenvalue(a) >= -rel * std::max(1.0, frobenius_norm(a));
}

}  // namespace detail

inline ProblemClass classify(const QMPProblem& p) {
  require_valid(p);
  ProblemClass cls;

  cls.type2 = detail::is_identity(p.objective.D);
  for (const auto& f : p.inequalities) cls.type2 = cls.type2 && detail::is_identity(f.D);
  for (const auto& f : p.equalities) cls.type2 = cls.type2 && detail::is_identity(f.D);

  const bool no_constraints = p.inequalities.empty() && p.equalities.empty();
  if (no_constraints && is_positive_definite(p.objective.A)) {
    cls.tag = ProblemTag::Unconstrained;
    return cls;
  }

  if (cls.type2 && p.equalities.empty() && p.inequalities.size() == 1) {
    const QMFunction& g = p.inequalities.front();
    const bool pure_trace = frobenius_norm(g.B) <= 1e-12 * std::max(1.0, frobenius_norm(g.A));
    // The semi-closed form also needs A_0 >= 0; indefinite objectives fall
    // through to the general (homogenized) route.
    if (pure_trace && g.c < 0.0 && is_positive_definite(g.A) &&
        detail::psd_within(p.objective.A)) {
      cls.tag = ProblemTag::SingleTraceConstraint;
      return cls;
    }
  }

  bool convex = p.equalities.empty();
  convex = convex && detail::psd_within(p.objective.A) && detail::psd_within(p.objective.D);
  for (const auto& f : p.inequalities)
    convex = convex && detail::psd_within(f.A) && detail::psd_within(f.D);
  cls.tag = convex ? ProblemTag::Convex : ProblemTag::General;
  return cls;
}

// Omega lifting of a QM function: the (nr+1) x (nr+1) Hermitian matrix
//   [[D^T kron A, vec(B)], [vec^H(B), c]]
// satisfying f(X) = [vec(X); 1]^H Omega [vec(X); 1].
inline CMatrix vectorize_omega(const QMFunction& f) {
  const std::size_t m = f.n() * f.r();
  CMatrix omega(m + 1, m + 1);
  const CMatrix top = kron(transpose(f.D), f.A);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) omega(i, j) = top(i, j);
  const CMatrix vb = vec(f.B);
  for (std::size_t i = 0; i < m; ++i) {
    omega(i, m) = vb(i, 0);
    omega(m, i) = conj_of(vb(i, 0));
  }
  omega(m, m) = f.c;
  return hermitian_part(omega);
}

// ---------------------------------------------------------------------------
// Homogenization of type-2 problems.

struct HomogenizedProblem {
  std::size_t n = 0;
  std::size_t r = 0;
  CMatrix objective_m;                  // (n+r) x (n+r)
  std::vector<CMatrix> inequality_m;    // Tr(M_i U) <= alpha_i
  std::vector<CMatrix> equality_m;      // Tr(M_j U) == alpha_j
  std::vector<double> inequality_rhs;   // all zero: constants folded into M via c
  std::vector<double> equality_rhs;
};

namespace detail {

inline CMatrix homogenize_function(const QMFunction& f) {
  const std::size_t n = f.n(), r = f.r();
  CMatrix m(n + r, n + r);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = f.A(i, j);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < r; ++j) {
      m(i, n + j) = f.B(i, j);
      m(n + j, i) = conj_of(f.B(i, j));
    }
  const double d = f.c / double(r);
  for (std::size_t j = 0; j < r; ++j) m(n + j, n + j) = d;
  return m;
}

}  // namespace detail

// Lift every QM function f_l to M_l = [[A_l, B_l], [B_l^H, (c_l/r) I_r]] so
// that Tr(M_l [Y;Z][Y;Z]^H) = f_l(Y Z^H) whenever Z^H Z = I_r.
inline HomogenizedProblem homogenize(const QMPProblem& p) {
  const ProblemClass cls = classify(p);
  if (!cls.type2)
    throw ValidationError("homogenize: problem is not type-2 (some D_l differs from I)");
  HomogenizedProblem h;
  h.n = p.n;
  h.r = p.r;
  h.objective_m = detail::homogenize_function(p.objective);
  for (const auto& f : p.inequalities) {
    h.inequality_m.push_back(detail::homogenize_function(f));
    h.inequality_rhs.push_back(0.0);
  }
  for (const auto& f : p.equalities) {
    h.equality_m.push_back(detail::homogenize_function(f));
    h.equality_rhs.push_back(0.0);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Whitening: change of variable Xt = X W^{1/2} turning a common right factor
// D_l = W (W > 0) into the identity, i.e. a type-2 problem.

struct WhitenedProblem {
  QMPProblem problem;   // type-2 in the whitened variable
  CMatrix w_sqrt;       // W^{1/2}
  CMatrix w_inv_sqrt;   // W^{-1/2}

  CMatrix to_whitened(const CMatrix& x) const { return x * w_sqrt; }
  CMatrix to_original(const CMatrix& xt) const { return xt * w_inv_sqrt; }
};

inline WhitenedProblem whiten(const QMPProblem& p, const CMatrix& w) {
  require_valid(p);
  if (w.rows() != p.r || w.cols() != p.r)
    throw DimensionError("whiten: W must be r x r");
  if (!is_positive_definite(w))
    throw NotPsdError("whiten: W is not positive definite");
  const double wtol = 1e-10 * std::max(1.0, frobenius_norm(w));
  auto check_factor = [&](const QMFunction& f, const std::string& name) {
    if (frobenius_norm(f.D - w) > wtol)
      throw ValidationError("whiten: " + name + ".D differs from the common factor W");
  };
  check_factor(p.objective, "objective");
  for (std::size_t i = 0; i < p.inequalities.size(); ++i)
    check_factor(p.inequalities[i], "inequality[" + std::to_string(i) + "]");
  for (std::size_t j = 0; j < p.equalities.size(); ++j)
    check_factor(p.equalities[j], "equality[" + std::to_string(j) + "]");

  WhitenedProblem out;
  out.w_sqrt = psd_sqrt(w);
  out.w_inv_sqrt = psd_inv_sqrt(w);
  auto rewrite = [&](const QMFunction& f) {
    return QMFunction{f.A, f.B * out.w_inv_sqrt, f.c, CMatrix::identity(p.r)};
  };
  out.problem.n = p.n;
  out.problem.r = p.r;
  out.problem.objective = rewrite(p.objective);
  for (const auto& f : p.inequalities) out.problem.inequalities.push_back(rewrite(f));
  for (const auto& f : p.equalities) out.problem.equalities.push_back(rewrite(f));
  return out;
}

}  // namespace qmp
