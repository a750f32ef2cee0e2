#pragma once

// Solver facade for QMP problems. Classifies the instance and dispatches to
// the cheapest applicable path:
//
//   UNCONSTRAINED            -> closed form X = -A0^{-1} B0 D0^{-1}
//   SINGLE_TRACE_CONSTRAINT  -> KKT semi-closed form with bisection on mu
//   CONVEX                   -> Schur-complement SDP (default) or SOCP, both
//                               compiled to the real cone backend
//   GENERAL, type-2          -> homogenized relaxation over U = [Y;Z][Y;Z]^H
//   GENERAL, otherwise       -> Omega-form semidefinite relaxation (SDR)
//
// Relaxation paths report a certified lower bound next to the recovered
// objective; recovery failures raise RecoveryError carrying that bound.

#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "qmp/closed_form.hpp"
#include "qmp/conic.hpp"
#include "qmp/errors.hpp"
#include "qmp/matrix.hpp"
#include "qmp/qm_model.hpp"

namespace qmp {

enum class SolvePath { ClosedForm, Bisection, ConvexSdp, ConvexSocp, SdrGeneral, HomogenizedT2 };

inline const char* to_string(SolvePath p) {
  switch (p) {
    case SolvePath::ClosedForm: return "CLOSED_FORM";
    case SolvePath::Bisection: return "BISECTION";
    case SolvePath::ConvexSdp: return "CONVEX_SDP";
    case SolvePath::ConvexSocp: return "CONVEX_SOCP";
    case SolvePath::SdrGeneral: return "SDR_GENERAL";
    case SolvePath::HomogenizedT2: return "HOMOGENIZED_T2";
  }
  return "?";
}

struct SolveSettings {
  double tol = 1e-8;
  std::size_t max_iter = 200;
  std::optional<SolvePath> force_path;
  bool prefer_socp = false;            // convex route when not forced
  double feasibility_tol = 1e-6;       // relative acceptance for recovered X
  std::ostream* diagnostics = nullptr; // one structured record per solve
  std::ostream* backend_trace = nullptr;
};

struct QMPSolution {
  CMatrix x;
  double objective = 0.0;
  SolvePath path = SolvePath::ClosedForm;
  double lower_bound = 0.0;
  double feasibility_violation = 0.0;
  double recovery_rank_gap = 0.0;
  KKTDiagnostics kkt;
};

// Worst relative constraint violation of X: positive part for inequalities,
// absolute value for equalities, each scaled by the constraint's magnitude.
inline double feasibility_violation(const QMPProblem& p, const CMatrix& x) {
  auto scaled = [&](const QMFunction& f, bool equality) {
    const double quad = trace_product(f.D, adjoint(x) * f.A * x).real();
    const double lin = 2.0 * trace_product(adjoint(f.B), x).real();
    const double val = quad + lin + f.c;
    const double scale = std::max(1.0, std::abs(quad) + std::abs(lin) + std::abs(f.c));
    return (equality ? std::abs(val) : std::max(0.0, val)) / scale;
  };
  double worst = 0.0;
  for (const auto& f : p.inequalities) worst = std::max(worst, scaled(f, false));
  for (const auto& f : p.equalities) worst = std::max(worst, scaled(f, true));
  return worst;
}

// ---------------------------------------------------------------------------
// Omega-form SDR (general type-1 problems).

struct SdrRelaxation {
  std::size_t n = 0;
  std::size_t r = 0;
  ComplexSdp complex_form;     // over Hermitian Z of size nr+1
  ComplexEmbedding embedding;  // the real cone program fed to the backend
};

inline SdrRelaxation build_sdr(const QMPProblem& p) {
  require_valid(p);
  SdrRelaxation rel;
  rel.n = p.n;
  rel.r = p.r;
  const std::size_t dim = p.n * p.r + 1;
  rel.complex_form.objective = vectorize_omega(p.objective);
  for (const auto& f : p.inequalities)
    rel.complex_form.constraints.push_back(
        {vectorize_omega(f), 0.0, ConstraintSense::LessEqual});
  for (const auto& f : p.equalities)
    rel.complex_form.constraints.push_back({vectorize_omega(f), 0.0, ConstraintSense::Equal});
  CMatrix corner(dim, dim);
  corner(dim - 1, dim - 1) = 1.0;
  rel.complex_form.constraints.push_back({corner, 1.0, ConstraintSense::Equal});
  rel.embedding = complexify(rel.complex_form);
  return rel;
}

struct Rank1Recovery {
  CMatrix x;
  double rank_gap = 0.0;  // lambda_2 / lambda_1 of the lifted solution
};

// Extract X from a (near) rank-one lifted solution Z ~ [vec(X);1][vec(X);1]^H.
// Ties between leading eigenvectors are broken by the largest |last entry|.
inline Rank1Recovery recover_rank1(const CMatrix& z, std::size_t n, std::size_t r) {
  const std::size_t dim = n * r + 1;
  if (z.rows() != dim || z.cols() != dim)
    throw DimensionError("recover_rank1: lifted matrix has wrong dimension");
  if (std::abs(z(dim - 1, dim - 1) - 1.0) > 1e-6)
    throw ValidationError("recover_rank1: corner entry of Z is not 1");
  HermitianEig eig = hermitian_eig(z);
  const double l1 = std::max(eig.eigenvalues.front(), 0.0);
  Rank1Recovery out;
  out.rank_gap =
      (dim > 1 && l1 > 0.0) ? std::max(eig.eigenvalues[1], 0.0) / l1 : 0.0;

  std::size_t pick = 0;
  double best_last = -1.0;
  for (std::size_t k = 0; k < dim; ++k) {
    if (eig.eigenvalues[k] < eig.eigenvalues[0] * (1.0 - 1e-9)) break;
    const double last = std::abs(eig.eigenvectors(dim - 1, k));
    if (last > best_last) {
      best_last = last;
      pick = k;
    }
  }
  if (best_last < 1e-8)
    throw RecoveryError("recover_rank1: leading eigenvector has vanishing last entry",
                        0.0, 0.0);
  // Dividing by the last entry restores both the scale and the phase of
  // [vec(X); 1], independent of the eigenvector normalization.
  const cplx pivot = eig.eigenvectors(dim - 1, pick);
  CMatrix stacked(n * r, 1);
  for (std::size_t i = 0; i + 1 < dim; ++i)
    stacked(i, 0) = eig.eigenvectors(i, pick) / pivot;
  out.x = unvec(stacked, n, r);
  return out;
}

// ---------------------------------------------------------------------------
// Convex reformulations (Schur-complement SDP and SOCP), both expressed as a
// linear matrix program in the real variables u = [Re vec(X); Im vec(X); t].

namespace detail {

// Real operator form of a complex matrix K acting on embedded vectors:
// [[Re K, -Im K], [Im K, Re K]].
inline RMatrix real_embed_operator(const CMatrix& k) {
  const std::size_t rr = k.rows(), cc = k.cols();
  RMatrix e(2 * rr, 2 * cc);
  for (std::size_t i = 0; i < rr; ++i)
    for (std::size_t j = 0; j < cc; ++j) {
      const double re = k(i, j).real(), im = k(i, j).imag();
      e(i, j) = re;
      e(i + rr, j + cc) = re;
      e(i, j + cc) = -im;
      e(i + rr, j) = im;
    }
  return e;
}

struct ConvexBlocks {
  std::vector<RMatrix> op;      // embedded D^{T/2} kron A^{1/2} per function
  std::vector<RMatrix> shift;   // embedded constant border (SOCP only)
  std::vector<double> kappa;    // Tr(A^{-1} B D^{-1} B^H) per function (SOCP)
};

}  // namespace detail

struct ConvexRelaxation {
  std::size_t n = 0;
  std::size_t r = 0;
  double c0 = 0.0;
  double socp_offset = 0.0;  // c0 - Tr(A0^{-1} B0 D0^{-1} B0^H), SOCP only
  bool socp = false;
  LinearMatrixProgram lmi;
  ConeProgram program;

  std::size_t num_vars() const { return lmi.fk.size(); }

  CMatrix recover_x(const std::vector<double>& u) const {
    const std::size_t m = n * r;
    RMatrix xt(2 * m, 1);
    for (std::size_t i = 0; i < 2 * m; ++i) xt(i, 0) = u[i];
    return unvec(complex_from_embedded(xt), n, r);
  }
};

// Epigraph Schur-complement SDP: one LMI block per QM function,
//   [[I, w_l(x)], [w_l(x)^T, t - 2 b_l^T x  (objective)
//                             -2 b_l^T x - c_l (constraints)]] >= 0
// with w_l = embed(D_l^{T/2} kron A_l^{1/2}) x. Optimal t is the optimal
// objective minus c_0.
inline ConvexRelaxation build_convex_schur(const QMPProblem& p) {
  require_valid(p);
  if (!p.equalities.empty())
    throw ValidationError("build_convex_schur: equality constraints are not convex here");
  auto require_psd = [](const CMatrix& m, const std::string& name) {
    if (!detail::psd_within(m))
      throw NotPsdError("build_convex_schur: " + name + " is not PSD");
  };
  require_psd(p.objective.A, "objective.A");
  require_psd(p.objective.D, "objective.D");
  for (std::size_t i = 0; i < p.inequalities.size(); ++i) {
    require_psd(p.inequalities[i].A, "inequality[" + std::to_string(i) + "].A");
    require_psd(p.inequalities[i].D, "inequality[" + std::to_string(i) + "].D");
  }

  const std::size_t m = p.n * p.r;
  const std::size_t nvar = 2 * m + 1;  // embedded vec(X) plus t
  const std::size_t block = 2 * m + 1; // each LMI block is (2m+1) x (2m+1)
  const std::size_t nfun = 1 + p.inequalities.size();
  const std::size_t dim = nfun * block;

  ConvexRelaxation rel;
  rel.n = p.n;
  rel.r = p.r;
  rel.c0 = p.objective.c;

  std::vector<const QMFunction*> funcs{&p.objective};
  for (const auto& f : p.inequalities) funcs.push_back(&f);

  rel.lmi.f0 = RMatrix(dim, dim);
  rel.lmi.fk.assign(nvar, RMatrix(dim, dim));
  rel.lmi.objective.assign(nvar, 0.0);
  rel.lmi.objective[nvar - 1] = 1.0;  // min t

  for (std::size_t l = 0; l < nfun; ++l) {
    const QMFunction& f = *funcs[l];
    const std::size_t off = l * block;
    const RMatrix op = detail::real_embed_operator(
        kron(transpose(psd_sqrt(f.D)), psd_sqrt(f.A)));
    const RMatrix beta = real_embed_vector(vec(f.B));

    for (std::size_t i = 0; i < 2 * m; ++i) rel.lmi.f0(off + i, off + i) = 1.0;
    if (l > 0) rel.lmi.f0(off + 2 * m, off + 2 * m) = -f.c;

    for (std::size_t k = 0; k < 2 * m; ++k) {
      RMatrix& fk = rel.lmi.fk[k];
      for (std::size_t i = 0; i < 2 * m; ++i) {
        const double v = op(i, k);
        if (v == 0.0) continue;
        fk(off + i, off + 2 * m) += v;
        fk(off + 2 * m, off + i) += v;
      }
      fk(off + 2 * m, off + 2 * m) += -2.0 * beta(k, 0);
    }
    if (l == 0) rel.lmi.fk[nvar - 1](off + 2 * m, off + 2 * m) = 1.0;
  }
  rel.program = lmi_to_cone_program(rel.lmi);
  return rel;
}

// SOCP reformulation, valid for strictly definite A_l and D_l:
//   || A_l^{1/2} X D_l^{1/2} + A_l^{-1/2} B_l D_l^{-1/2} ||_F <= t     (obj)
//   || ... ||_F <= sqrt(Tr(A_i^{-1} B_i D_i^{-1} B_i^H) - c_i)         (cons)
// embedded as arrowhead LMI blocks. A negative value under a square root
// certifies that constraint alone is infeasible.
inline ConvexRelaxation build_convex_socp(const QMPProblem& p) {
  require_valid(p);
  if (!p.equalities.empty())
    throw ValidationError("build_convex_socp: equality constraints are not convex here");
  auto require_pd = [](const CMatrix& mat, const std::string& name) {
    if (!is_positive_definite(mat))
      throw NotPsdError("build_convex_socp: " + name + " is not positive definite");
  };
  require_pd(p.objective.A, "objective.A");
  require_pd(p.objective.D, "objective.D");
  for (std::size_t i = 0; i < p.inequalities.size(); ++i) {
    require_pd(p.inequalities[i].A, "inequality[" + std::to_string(i) + "].A");
    require_pd(p.inequalities[i].D, "inequality[" + std::to_string(i) + "].D");
  }

  const std::size_t m = p.n * p.r;
  const std::size_t nvar = 2 * m + 1;
  const std::size_t block = 2 * m + 1;
  const std::size_t nfun = 1 + p.inequalities.size();
  const std::size_t dim = nfun * block;

  ConvexRelaxation rel;
  rel.n = p.n;
  rel.r = p.r;
  rel.c0 = p.objective.c;
  rel.socp = true;

  std::vector<const QMFunction*> funcs{&p.objective};
  for (const auto& f : p.inequalities) funcs.push_back(&f);

  rel.lmi.f0 = RMatrix(dim, dim);
  rel.lmi.fk.assign(nvar, RMatrix(dim, dim));
  rel.lmi.objective.assign(nvar, 0.0);
  rel.lmi.objective[nvar - 1] = 1.0;

  for (std::size_t l = 0; l < nfun; ++l) {
    const QMFunction& f = *funcs[l];
    const std::size_t off = l * block;
    const CMatrix a_half = psd_sqrt(f.A);
    const CMatrix a_ihalf = psd_inv_sqrt(f.A);
    const CMatrix d_ihalf = psd_inv_sqrt(f.D);
    const RMatrix op = detail::real_embed_operator(
        kron(transpose(psd_sqrt(f.D)), a_half));
    const CMatrix shift_c = vec(a_ihalf * f.B * d_ihalf);
    const RMatrix shift = real_embed_vector(shift_c);
    const double kappa =
        trace(hermitian_solve(f.A, f.B) * hermitian_solve(f.D, adjoint(f.B))).real();

    if (l == 0) {
      rel.socp_offset = f.c - kappa;
      // t on the whole block diagonal
      for (std::size_t i = 0; i < block; ++i)
        rel.lmi.fk[nvar - 1](off + i, off + i) = 1.0;
    } else {
      const double rhs2 = kappa - f.c;
      if (rhs2 < -1e-12 * std::max(1.0, std::abs(kappa) + std::abs(f.c)))
        throw InfeasibleError("build_convex_socp: constraint " + std::to_string(l - 1) +
                              " is infeasible (negative value under the square root)");
      const double rho = std::sqrt(std::max(rhs2, 0.0));
      for (std::size_t i = 0; i < block; ++i) rel.lmi.f0(off + i, off + i) = rho;
    }
    for (std::size_t i = 0; i < 2 * m; ++i) {
      rel.lmi.f0(off + i, off + 2 * m) += shift(i, 0);
      rel.lmi.f0(off + 2 * m, off + i) += shift(i, 0);
    }
    for (std::size_t k = 0; k < 2 * m; ++k) {
      RMatrix& fk = rel.lmi.fk[k];
      for (std::size_t i = 0; i < 2 * m; ++i) {
        const double v = op(i, k);
        if (v == 0.0) continue;
        fk(off + i, off + 2 * m) += v;
        fk(off + 2 * m, off + i) += v;
      }
    }
  }
  rel.program = lmi_to_cone_program(rel.lmi);
  return rel;
}

// ---------------------------------------------------------------------------
// Homogenized type-2 relaxation.

namespace detail {

// Nearest matrix with orthonormal columns (polar factor). Rank-deficient
// directions are completed deterministically from the canonical basis.
inline CMatrix nearest_unitary(const CMatrix& z) {
  const std::size_t r = z.cols();
  const CMatrix gram = hermitian_part(adjoint(z) * z);
  HermitianEig eig = hermitian_eig(gram);
  const double top = std::max(eig.eigenvalues.front(), 0.0);
  CMatrix w(z.rows(), r);
  if (top > 0.0) {
    CMatrix inv_s(r, r);
    for (std::size_t k = 0; k < r; ++k) {
      const double s = std::sqrt(std::max(eig.eigenvalues[k], 0.0));
      inv_s(k, k) = (s > 1e-10 * std::sqrt(top)) ? 1.0 / s : 0.0;
    }
    w = z * eig.eigenvectors * inv_s * adjoint(eig.eigenvectors);
  }
  // Gram-Schmidt pass with canonical completion for dropped directions.
  for (std::size_t j = 0; j < r; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      cplx proj{};
      for (std::size_t i = 0; i < w.rows(); ++i) proj += conj_of(w(i, k)) * w(i, j);
      for (std::size_t i = 0; i < w.rows(); ++i) w(i, j) -= proj * w(i, k);
    }
    double nrm = 0.0;
    for (std::size_t i = 0; i < w.rows(); ++i) nrm += std::norm(w(i, j));
    nrm = std::sqrt(nrm);
    if (nrm > 1e-8) {
      for (std::size_t i = 0; i < w.rows(); ++i) w(i, j) *= 1.0 / nrm;
      continue;
    }
    for (std::size_t cand = 0; cand < w.rows(); ++cand) {
      CMatrix e(w.rows(), 1);
      e(cand, 0) = 1.0;
      for (std::size_t k = 0; k < j; ++k) {
        cplx proj{};
        for (std::size_t i = 0; i < w.rows(); ++i) proj += conj_of(w(i, k)) * e(i, 0);
        for (std::size_t i = 0; i < w.rows(); ++i) e(i, 0) -= proj * w(i, k);
      }
      const double enrm = frobenius_norm(e);
      if (enrm > 0.5) {
        for (std::size_t i = 0; i < w.rows(); ++i) w(i, j) = e(i, 0) / enrm;
        break;
      }
    }
  }
  return w;
}

}  // namespace detail

struct HomogenizedRelaxation {
  std::size_t n = 0;
  std::size_t r = 0;
  ComplexSdp complex_form;     // over Hermitian U of size n+r
  ComplexEmbedding embedding;
};

inline HomogenizedRelaxation build_homogenized(const QMPProblem& p) {
  HomogenizedProblem h = homogenize(p);
  HomogenizedRelaxation rel;
  rel.n = h.n;
  rel.r = h.r;
  const std::size_t dim = h.n + h.r;
  rel.complex_form.objective = h.objective_m;
  for (std::size_t i = 0; i < h.inequality_m.size(); ++i)
    rel.complex_form.constraints.push_back(
        {h.inequality_m[i], h.inequality_rhs[i], ConstraintSense::LessEqual});
  for (std::size_t j = 0; j < h.equality_m.size(); ++j)
    rel.complex_form.constraints.push_back(
        {h.equality_m[j], h.equality_rhs[j], ConstraintSense::Equal});
  // Pin the bottom-right r x r block of U to the identity.
  for (std::size_t k = 0; k < h.r; ++k) {
    CMatrix diag(dim, dim);
    diag(h.n + k, h.n + k) = 1.0;
    rel.complex_form.constraints.push_back({diag, 1.0, ConstraintSense::Equal});
  }
  for (std::size_t a = 0; a < h.r; ++a)
    for (std::size_t b = a + 1; b < h.r; ++b) {
      CMatrix re(dim, dim), im(dim, dim);
      re(h.n + a, h.n + b) = 0.5;
      re(h.n + b, h.n + a) = 0.5;
      im(h.n + a, h.n + b) = cplx(0.0, 0.5);
      im(h.n + b, h.n + a) = cplx(0.0, -0.5);
      rel.complex_form.constraints.push_back({re, 0.0, ConstraintSense::Equal});
      rel.complex_form.constraints.push_back({im, 0.0, ConstraintSense::Equal});
    }
  rel.embedding = complexify(rel.complex_form);
  return rel;
}

namespace detail {

// Scale a candidate into the feasible region when every inequality is a pure
// PSD quadratic cap (B_i = 0, c_i <= 0) and there are no equalities.
inline std::optional<CMatrix> scaled_repair(const QMPProblem& p, const CMatrix& x) {
  if (!p.equalities.empty()) return std::nullopt;
  double s2 = 1.0;
  for (const auto& f : p.inequalities) {
    if (frobenius_norm(f.B) > 1e-12 * std::max(1.0, frobenius_norm(f.A)))
      return std::nullopt;
    if (f.c > 0.0) return std::nullopt;
    const double q = trace_product(f.D, adjoint(x) * f.A * x).real();
    if (q <= 0.0) continue;
    s2 = std::min(s2, -f.c / q);
  }
  if (s2 >= 1.0) return x;
  return std::sqrt(std::max(s2, 0.0)) * x;
}

}  // namespace detail

inline QMPSolution solve_homogenized_t2(const QMPProblem& p, const SolveSettings& settings = {}) {
  HomogenizedRelaxation rel = build_homogenized(p);
  ConeSolution sol = solve_sdp(rel.embedding.program, settings.tol, settings.max_iter,
                               settings.backend_trace);
  if (sol.status == ConeStatus::Infeasible)
    throw InfeasibleError("solve_homogenized_t2: relaxation is infeasible");
  if (sol.status != ConeStatus::Optimal)
    throw NumericalError("solve_homogenized_t2: cone backend did not converge");

  const CMatrix u = rel.embedding.recover(sol.z);
  const double bound = sol.objective;
  const std::size_t n = rel.n, r = rel.r;

  HermitianEig eig = hermitian_eig(u);
  const double l1 = std::max(eig.eigenvalues.front(), 1e-300);
  const double rank_gap =
      (eig.eigenvalues.size() > r) ? std::max(eig.eigenvalues[r], 0.0) / l1 : 0.0;

  std::vector<CMatrix> candidates;
  {
    CMatrix xblk(n, r);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < r; ++j) xblk(i, j) = u(i, n + j);
    candidates.push_back(std::move(xblk));
  }
  {
    // Leading-r factorization U ~ F F^H, F = [Y; Zf], Z projected to the
    // nearest orthonormal square factor, X = Y Z^H.
    CMatrix y(n, r), zf(r, r);
    for (std::size_t k = 0; k < r; ++k) {
      const double amp = std::sqrt(std::max(eig.eigenvalues[k], 0.0));
      for (std::size_t i = 0; i < n; ++i) y(i, k) = amp * eig.eigenvectors(i, k);
      for (std::size_t i = 0; i < r; ++i) zf(i, k) = amp * eig.eigenvectors(n + i, k);
    }
    candidates.push_back(y * adjoint(detail::nearest_unitary(zf)));
  }
  {
    const std::size_t base = candidates.size();
    for (std::size_t i = 0; i < base; ++i)
      if (auto repaired = detail::scaled_repair(p, candidates[i]))
        candidates.push_back(std::move(*repaired));
  }

  QMPSolution out;
  out.path = SolvePath::HomogenizedT2;
  out.lower_bound = bound;
  out.recovery_rank_gap = rank_gap;
  double best_obj = 0.0, best_viol = 1e300;
  bool found = false;
  for (const auto& cand : candidates) {
    const double viol = feasibility_violation(p, cand);
    const double obj = evaluate(p.objective, cand);
    best_viol = std::min(best_viol, viol);
    if (viol <= settings.feasibility_tol && (!found || obj < best_obj)) {
      found = true;
      best_obj = obj;
      out.x = cand;
      out.objective = obj;
      out.feasibility_violation = viol;
    }
  }
  if (!found)
    throw RecoveryError("solve_homogenized_t2: no feasible matrix recovered", bound,
                        best_viol);
  return out;
}

// ---------------------------------------------------------------------------
// Dispatch.

namespace detail {

inline QMPSolution solve_closed_form(const QMPProblem& p) {
  QMPSolution out;
  out.path = SolvePath::ClosedForm;
  const CMatrix a0 = hermitian_part(p.objective.A);
  const CMatrix& b0 = p.objective.B;
  const CMatrix d0 = hermitian_part(p.objective.D);
  if (is_identity(d0)) {
    out.x = solve_unconstrained(a0, b0);
  } else if (is_positive_definite(d0)) {
    out.x = -hermitian_solve(a0, b0 * hermitian_solve(d0, CMatrix::identity(p.r)));
  } else {
    // Singular PSD weight: solvable only if B lies in the range of D.
    const CMatrix bhat = adjoint(hermitian_pinv_solve(d0, adjoint(b0)));
    if (frobenius_norm(bhat * d0 - b0) > 1e-8 * std::max(1.0, frobenius_norm(b0)))
      throw NumericalError(
          "solve: unconstrained objective is unbounded below (B not in range of D)");
    out.x = solve_unconstrained(a0, bhat);
  }
  out.objective = evaluate(p.objective, out.x);
  out.lower_bound = out.objective;
  out.kkt.stationarity_residual = frobenius_norm(a0 * out.x * d0 + b0);
  return out;
}

inline QMPSolution solve_bisection(const QMPProblem& p, const SolveSettings& settings) {
  const QMFunction& g = p.inequalities.front();
  SingleConstraintInstance inst;
  inst.A0 = hermitian_part(p.objective.A);
  inst.B0 = p.objective.B;
  inst.c0 = p.objective.c;
  inst.A1 = hermitian_part(g.A);
  inst.P = -g.c;
  SingleConstraintResult res = solve_single_constraint(inst, settings.tol);
  QMPSolution out;
  out.path = SolvePath::Bisection;
  out.x = res.X;
  out.objective = res.objective;
  out.lower_bound = res.objective;  // KKT point is the unique optimum
  out.kkt = res.kkt;
  out.feasibility_violation = feasibility_violation(p, out.x);
  return out;
}

inline QMPSolution solve_convex(const QMPProblem& p, const SolveSettings& settings,
                                bool socp) {
  ConvexRelaxation rel = socp ? build_convex_socp(p) : build_convex_schur(p);
  LmiSolution lp = solve_lmi(rel.lmi, settings.tol, settings.max_iter,
                             settings.backend_trace);
  if (lp.status == ConeStatus::Infeasible)
    throw InfeasibleError("solve: convex reformulation reported infeasible");
  if (lp.status != ConeStatus::Optimal)
    throw NumericalError("solve: cone backend did not converge on the convex path");
  QMPSolution out;
  out.path = socp ? SolvePath::ConvexSocp : SolvePath::ConvexSdp;
  out.x = rel.recover_x(lp.u);
  out.objective = evaluate(p.objective, out.x);
  if (socp) {
    const double t_lb = std::max(lp.lower_bound, 0.0);
    out.lower_bound = t_lb * t_lb + rel.socp_offset;
  } else {
    out.lower_bound = lp.lower_bound + rel.c0;
  }
  out.lower_bound = std::min(out.lower_bound, out.objective);
  out.feasibility_violation = feasibility_violation(p, out.x);
  return out;
}

inline QMPSolution solve_sdr_general(const QMPProblem& p, const SolveSettings& settings) {
  SdrRelaxation rel = build_sdr(p);
  ConeSolution sol = solve_sdp(rel.embedding.program, settings.tol, settings.max_iter,
                               settings.backend_trace);
  if (sol.status == ConeStatus::Infeasible)
    throw InfeasibleError("solve: SDR relaxation is infeasible");
  if (sol.status != ConeStatus::Optimal)
    throw NumericalError("solve: cone backend did not converge on the SDR path");
  const CMatrix z = rel.embedding.recover(sol.z);
  Rank1Recovery rec;
  try {
    rec = recover_rank1(z, p.n, p.r);
  } catch (const RecoveryError& e) {
    throw RecoveryError(e.what(), sol.objective, e.best_violation);
  }
  QMPSolution out;
  out.path = SolvePath::SdrGeneral;
  out.lower_bound = sol.objective;
  out.recovery_rank_gap = rec.rank_gap;
  out.x = rec.x;
  out.objective = evaluate(p.objective, out.x);
  out.feasibility_violation = feasibility_violation(p, out.x);
  if (out.feasibility_violation > settings.feasibility_tol) {
    if (auto repaired = detail::scaled_repair(p, out.x)) {
      const double viol = feasibility_violation(p, *repaired);
      if (viol <= settings.feasibility_tol) {
        out.x = *repaired;
        out.objective = evaluate(p.objective, out.x);
        out.feasibility_violation = viol;
        return out;
      }
    }
    throw RecoveryError("solve: SDR recovery produced an infeasible X", sol.objective,
                        out.feasibility_violation);
  }
  return out;
}

}  // namespace detail

inline QMPSolution solve(const QMPProblem& p, const SolveSettings& settings = {}) {
  require_valid(p);
  const ProblemClass cls = classify(p);

  SolvePath path;
  if (settings.force_path) {
    path = *settings.force_path;
  } else {
    switch (cls.tag) {
      case ProblemTag::Unconstrained: path = SolvePath::ClosedForm; break;
      case ProblemTag::SingleTraceConstraint: path = SolvePath::Bisection; break;
      case ProblemTag::Convex:
        path = settings.prefer_socp ? SolvePath::ConvexSocp : SolvePath::ConvexSdp;
        break;
      case ProblemTag::General:
      default:
        path = cls.type2 ? SolvePath::HomogenizedT2 : SolvePath::SdrGeneral;
        break;
    }
  }

  QMPSolution out;
  switch (path) {
    case SolvePath::ClosedForm:
      if (!p.inequalities.empty() || !p.equalities.empty())
        throw ValidationError("solve: closed form requires an unconstrained problem");
      out = detail::solve_closed_form(p);
      break;
    case SolvePath::Bisection:
      if (cls.tag != ProblemTag::SingleTraceConstraint)
        throw ValidationError("solve: bisection requires a single pure trace constraint");
      out = detail::solve_bisection(p, settings);
      break;
    case SolvePath::ConvexSdp:
      out = detail::solve_convex(p, settings, false);
      break;
    case SolvePath::ConvexSocp:
      out = detail::solve_convex(p, settings, true);
      break;
    case SolvePath::HomogenizedT2:
      out = solve_homogenized_t2(p, settings);
      break;
    case SolvePath::SdrGeneral:
      out = detail::solve_sdr_general(p, settings);
      break;
  }

  if (settings.diagnostics)
    *settings.diagnostics << "solve path=" << to_string(out.path)
                          << " objective=" << out.objective
                          << " bound=" << out.lower_bound
                          << " rank_gap=" << out.recovery_rank_gap
                          << " violation=" << out.feasibility_violation
                          << " mu=" << out.kkt.mu << '\n';
  return out;
}

}  // namespace qmp
