#pragma once

// Self-contained dense interior-point solver for real symmetric standard-form
// semidefinite programs
//
//   min Tr(C Z)  s.t.  Tr(A_i Z) = b_i  or  Tr(A_i Z) <= b_i,   Z >= 0,
//
// plus the complex-to-real embedding that lets Hermitian programs run on it.
// The method is primal-dual path following with the HKM direction and a
// Mehrotra predictor-corrector. Inequalities are handled by nonnegative
// scalar slacks appended as 1x1 diagonal blocks; beyond those the main block
// is treated as one dense matrix. Sizes here stay small (a couple hundred
// rows at most), so dense linear algebra throughout is the right trade.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "qmp/errors.hpp"
#include "qmp/matrix.hpp"

namespace qmp {

enum class ConstraintSense { Equal, LessEqual };

struct ConeConstraint {
  RMatrix a;
  double b = 0.0;
  ConstraintSense sense = ConstraintSense::Equal;
};

struct ConeProgram {
  RMatrix c;
  std::vector<ConeConstraint> constraints;
  std::vector<std::size_t> blocks;  // optional diagonal block sizes, informational

  std::size_t dim() const { return c.rows(); }
};

enum class ConeStatus { Optimal, Infeasible, MaxIterations };

inline const char* to_string(ConeStatus s) {
  switch (s) {
    case ConeStatus::Optimal: return "OPTIMAL";
    case ConeStatus::Infeasible: return "INFEASIBLE";
    case ConeStatus::MaxIterations: return "MAX_ITER";
  }
  return "?";
}

struct ConeSolution {
  RMatrix z;              // primal matrix (main block)
  std::vector<double> y;  // dual multiplier per constraint
  double objective = 0.0;
  double dual_objective = 0.0;
  ConeStatus status = ConeStatus::MaxIterations;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  std::size_t iterations = 0;
  double certificate_norm = 0.0;  // infeasibility certificate strength
};

namespace detail {

// One dense main block plus 1x1 slack blocks.
struct BlockMat {
  RMatrix m;
  std::vector<double> s;

  BlockMat() = default;
  BlockMat(std::size_t dim, std::size_t nslack) : m(dim, dim), s(nslack, 0.0) {}

  static BlockMat identity(std::size_t dim, std::size_t nslack, double tau = 1.0) {
    BlockMat b(dim, nslack);
    for (std::size_t i = 0; i < dim; ++i) b.m(i, i) = tau;
    for (auto& v : b.s) v = tau;
    return b;
  }

  BlockMat& axpy(double alpha, const BlockMat& x) {
    for (std::size_t i = 0; i < m.entries().size(); ++i)
      m.entries()[i] += alpha * x.m.entries()[i];
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += alpha * x.s[i];
    return *this;
  }
  BlockMat& scale(double alpha) {
    for (auto& v : m.entries()) v *= alpha;
    for (auto& v : s) v *= alpha;
    return *this;
  }
  void symmetrize() {
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = i + 1; j < m.cols(); ++j) {
        const double v = 0.5 * (m(i, j) + m(j, i));
        m(i, j) = v;
        m(j, i) = v;
      }
  }
};

inline double trace_prod(const BlockMat& a, const BlockMat& b) {
  double t = 0.0;
  for (std::size_t i = 0; i < a.m.entries().size(); ++i)
    t += a.m.entries()[i] * b.m.entries()[i];  // valid for symmetric a or b? no:
  // the line above computes sum a_ij b_ij, which equals Tr(a b) when either
  // factor is symmetric; both operands here are symmetric by construction.
  for (std::size_t i = 0; i < a.s.size(); ++i) t += a.s[i] * b.s[i];
  return t;
}

inline BlockMat multiply(const BlockMat& a, const BlockMat& b) {
  BlockMat r(a.m.rows(), a.s.size());
  r.m = a.m * b.m;
  for (std::size_t i = 0; i < a.s.size(); ++i) r.s[i] = a.s[i] * b.s[i];
  return r;
}

inline BlockMat transpose_of(const BlockMat& a) {
  BlockMat r = a;
  r.m = transpose(a.m);
  return r;
}

inline double frob(const BlockMat& a) {
  double t = 0.0;
  for (double v : a.m.entries()) t += v * v;
  for (double v : a.s) t += v * v;
  return std::sqrt(t);
}

struct BlockChol {
  RMatrix l;
  std::vector<double> sroot;
  bool ok = false;
};

inline BlockChol block_chol(const BlockMat& a) {
  BlockChol c;
  for (double v : a.s)
    if (!(v > 0.0)) return c;
  auto l = cholesky(a.m);
  if (!l) return c;
  c.l = std::move(*l);
  c.sroot.resize(a.s.size());
  for (std::size_t i = 0; i < a.s.size(); ++i) c.sroot[i] = std::sqrt(a.s[i]);
  c.ok = true;
  return c;
}

// X^{-1} B using the factorization of X.
inline BlockMat chol_solve(const BlockChol& c, const BlockMat& b) {
  BlockMat r = b;
  r.m = lower_transpose_solve(c.l, lower_solve(c.l, b.m));
  for (std::size_t i = 0; i < b.s.size(); ++i) r.s[i] = b.s[i] / (c.sroot[i] * c.sroot[i]);
  return r;
}

// B X^{-1} = (X^{-1} B^T)^T for symmetric X.
inline BlockMat chol_solve_right(const BlockChol& c, const BlockMat& b) {
  BlockMat bt = transpose_of(b);
  return transpose_of(chol_solve(c, bt));
}

inline bool positive_definite_probe(const BlockMat& x, const BlockMat& dx, double alpha) {
  for (std::size_t i = 0; i < x.s.size(); ++i)
    if (!(x.s[i] + alpha * dx.s[i] > 0.0)) return false;
  BlockMat probe = x;
  probe.axpy(alpha, dx);
  return block_chol(probe).ok;
}

// sup { alpha in (0, cap] : X + alpha dX > 0 }, found by bisection with
// Cholesky feasibility probes. X itself must be positive definite.
inline double max_step(const BlockMat& x, const BlockMat& dx, double cap = 1.25) {
  double hi = cap;
  for (std::size_t i = 0; i < x.s.size(); ++i)
    if (dx.s[i] < 0.0) hi = std::min(hi, -x.s[i] / dx.s[i]);
  if (hi <= 0.0) return 0.0;
  if (positive_definite_probe(x, dx, hi)) return hi;
  double lo = 0.0;
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    (positive_definite_probe(x, dx, mid) ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace detail

inline ConeSolution solve_sdp(const ConeProgram& prog, double tol = 1e-8,
                              std::size_t max_iter = 200, std::ostream* trace = nullptr) {
  using detail::BlockMat;
  if (!(tol > 0.0)) throw std::invalid_argument("solve_sdp: tol must be > 0");
  if (prog.constraints.empty())
    throw ValidationError("solve_sdp: program must have at least one constraint");
  const std::size_t m = prog.dim();
  if (!prog.c.square()) throw DimensionError("solve_sdp: objective matrix not square");
  for (const auto& con : prog.constraints)
    if (con.a.rows() != m || con.a.cols() != m)
      throw DimensionError("solve_sdp: constraint matrix dimension mismatch");

  const std::size_t p = prog.constraints.size();
  std::size_t nslack = 0;
  for (const auto& con : prog.constraints)
    if (con.sense == ConstraintSense::LessEqual) ++nslack;

  // Augmented symmetric data: slack coordinate per inequality.
  BlockMat cmat(m, nslack);
  cmat.m = prog.c;
  cmat.symmetrize();
  std::vector<BlockMat> amats;
  std::vector<double> b(p);
  amats.reserve(p);
  {
    std::size_t slot = 0;
    for (std::size_t i = 0; i < p; ++i) {
      BlockMat ai(m, nslack);
      ai.m = prog.constraints[i].a;
      ai.symmetrize();
      if (prog.constraints[i].sense == ConstraintSense::LessEqual) ai.s[slot++] = 1.0;
      b[i] = prog.constraints[i].b;
    amats.push_back(std::move(ai));
    }
  }

  double bmax = 0.0, bnorm2 = 0.0;
  for (double v : b) {
    bmax = std::max(bmax, std::abs(v));
    bnorm2 += v * v;
  }
  const double bnorm = std::sqrt(bnorm2);
  // Normalize the objective so the iterate path (and hence the argmin) is
  // invariant under positive rescaling of C. Undone when reporting.
  double kappa = detail::frob(cmat);
  if (!(kappa > 1e-300)) kappa = 1.0;
  cmat.scale(1.0 / kappa);
  const double cnorm = detail::frob(cmat);
  const std::size_t ntot = m + nslack;

  const double tau_p = 1.0 + bmax;
  const double tau_d = 1.0 + cnorm;
  BlockMat z = BlockMat::identity(m, nslack, tau_p);
  BlockMat s = BlockMat::identity(m, nslack, tau_d);
  std::vector<double> y(p, 0.0);

  auto assemble_dual_residual = [&]() {
    BlockMat rd = cmat;
    rd.axpy(-1.0, s);
    for (std::size_t i = 0; i < p; ++i) rd.axpy(-y[i], amats[i]);
    return rd;
  };

  ConeSolution out;
  auto finalize = [&](ConeStatus status) {
    out.status = status;
    out.z = z.m;
    out.y = y;
    for (auto& v : out.y) v *= kappa;
    out.objective = kappa * detail::trace_prod(cmat, z);
    out.dual_objective =
        kappa * std::inner_product(b.begin(), b.end(), y.begin(), 0.0);
    return out;
  };

  // Solve M dy = rhs with a tiny ridge retry if the Schur matrix is singular.
  auto solve_schur = [&](RMatrix mat, std::vector<double> rhs) {
    RMatrix r(p, 1);
    for (std::size_t i = 0; i < p; ++i) r(i, 0) = rhs[i];
    double ridge = 0.0;
    double diag_scale = 0.0;
    for (std::size_t i = 0; i < p; ++i) diag_scale = std::max(diag_scale, std::abs(mat(i, i)));
    for (int attempt = 0; attempt < 6; ++attempt) {
      RMatrix reg = mat;
      if (ridge > 0.0)
        for (std::size_t i = 0; i < p; ++i) reg(i, i) += ridge;
      auto l = cholesky(reg);
      if (l) {
        RMatrix sol = lower_transpose_solve(*l, lower_solve(*l, r));
        std::vector<double> dy(p);
        for (std::size_t i = 0; i < p; ++i) dy[i] = sol(i, 0);
        return dy;
      }
      ridge = (ridge == 0.0) ? 1e-14 * std::max(1.0, diag_scale) : ridge * 1e3;
    }
    throw NumericalError("solve_sdp: Schur complement factorization failed");
  };

  for (std::size_t iter = 0; iter <= max_iter; ++iter) {
    std::vector<double> rp(p);
    double rpnorm2 = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      rp[i] = b[i] - detail::trace_prod(amats[i], z);
      rpnorm2 += rp[i] * rp[i];
    }
    BlockMat rd = assemble_dual_residual();

    const double pobj = detail::trace_prod(cmat, z);
    const double dobj = std::inner_product(b.begin(), b.end(), y.begin(), 0.0);
    const double gap_abs = detail::trace_prod(z, s);
    const double mu = gap_abs / double(ntot);
    const double rel_p = std::sqrt(rpnorm2) / (1.0 + bnorm);
    const double rel_d = detail::frob(rd) / (1.0 + cnorm);
    const double rel_gap = std::abs(gap_abs) / (1.0 + std::abs(pobj) + std::abs(dobj));

    if (trace)
      *trace << "iter " << iter << " pobj " << std::setprecision(10) << pobj << " dobj "
             << dobj << " rp " << rel_p << " rd " << rel_d << " gap " << rel_gap << '\n';

    out.primal_residual = rel_p;
    out.dual_residual = rel_d;
    out.gap = rel_gap;
    out.iterations = iter;

    if (rel_p <= tol && rel_d <= tol && rel_gap <= tol) return finalize(ConeStatus::Optimal);

    // Dual objective running away with dual feasibility held is a primal
    // infeasibility certificate (Farkas ray in y).
    double ynorm = 0.0;
    for (double v : y) ynorm += v * v;
    ynorm = std::sqrt(ynorm);
    if (rel_d <= 1e2 * tol && dobj > 1e8 * (1.0 + bnorm) && ynorm > 0.0) {
      out.certificate_norm = dobj / ynorm;
      return finalize(ConeStatus::Infeasible);
    }
    if (iter == max_iter) break;

    detail::BlockChol schol = detail::block_chol(s);
    if (!schol.ok) break;  // dual iterate lost definiteness, report best iterate

    // T_i = Z A_i S^{-1}
    std::vector<BlockMat> t(p);
    for (std::size_t i = 0; i < p; ++i)
      t[i] = detail::multiply(z, detail::chol_solve_right(schol, amats[i]));

    RMatrix schur(p, p);
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j) {
        // Tr(A_i Z A_j S^{-1}) = sum_kl A_i[k][l] T_j[l][k] plus slack part
        double v = 0.0;
        for (std::size_t k = 0; k < m; ++k)
          for (std::size_t l = 0; l < m; ++l) v += amats[i].m(k, l) * t[j].m(l, k);
        for (std::size_t k = 0; k < nslack; ++k) v += amats[i].s[k] * t[j].s[k];
        schur(i, j) = v;
      }
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = i + 1; j < p; ++j) {
        const double v = 0.5 * (schur(i, j) + schur(j, i));
        schur(i, j) = v;
        schur(j, i) = v;
      }

    auto direction = [&](const BlockMat& vrhs) {
      // dZ = (vrhs - Z R_d) S^{-1} + sum dy_i T_i,  dS = R_d - sum dy_i A_i
      BlockMat g = vrhs;
      g.axpy(-1.0, detail::multiply(z, rd));
      g = detail::chol_solve_right(schol, g);
      std::vector<double> rhs(p);
      for (std::size_t i = 0; i < p; ++i) {
        double v = 0.0;
        for (std::size_t k = 0; k < m; ++k)
          for (std::size_t l = 0; l < m; ++l) v += amats[i].m(k, l) * g.m(l, k);
        for (std::size_t k = 0; k < nslack; ++k) v += amats[i].s[k] * g.s[k];
        rhs[i] = rp[i] - v;
      }
      std::vector<double> dy = solve_schur(schur, rhs);
      BlockMat ds = rd;
      for (std::size_t i = 0; i < p; ++i) ds.axpy(-dy[i], amats[i]);
      BlockMat dz = g;
      for (std::size_t i = 0; i < p; ++i) dz.axpy(dy[i], t[i]);
      dz.symmetrize();
      return std::tuple<BlockMat, BlockMat, std::vector<double>>(std::move(dz), std::move(ds),
                                                                 std::move(dy));
    };

    // Predictor (affine scaling): target complementarity zero.
    BlockMat vaff = detail::multiply(z, s);
    vaff.scale(-1.0);
    auto [dz_aff, ds_aff, dy_aff] = direction(vaff);
    const double ap_aff = std::min(1.0, 0.98 * detail::max_step(z, dz_aff));
    const double ad_aff = std::min(1.0, 0.98 * detail::max_step(s, ds_aff));

    BlockMat ztrial = z;
    ztrial.axpy(ap_aff, dz_aff);
    BlockMat strial = s;
    strial.axpy(ad_aff, ds_aff);
    const double mu_aff = detail::trace_prod(ztrial, strial) / double(ntot);
    double sigma = (mu > 0.0) ? std::pow(mu_aff / mu, 3.0) : 0.0;
    sigma = std::clamp(sigma, 0.0, 1.0);

    // Corrector: sigma mu I - Z S - dZ_aff dS_aff.
    BlockMat vcorr = detail::multiply(z, s);
    vcorr.scale(-1.0);
    vcorr.axpy(-1.0, detail::multiply(dz_aff, ds_aff));
    for (std::size_t i = 0; i < m; ++i) vcorr.m(i, i) += sigma * mu;
    for (auto& v : vcorr.s) v += sigma * mu;
    auto [dz, ds, dy] = direction(vcorr);

    double ap = std::min(1.0, 0.98 * detail::max_step(z, dz));
    double ad = std::min(1.0, 0.98 * detail::max_step(s, ds));

    // Paranoid re-probe; with the 0.98 margin these should always pass.
    for (int k = 0; k < 8 && !detail::positive_definite_probe(z, dz, ap); ++k) ap *= 0.5;
    for (int k = 0; k < 8 && !detail::positive_definite_probe(s, ds, ad); ++k) ad *= 0.5;

    if (ap < 1e-12 && ad < 1e-12) break;  // stalled

    z.axpy(ap, dz);
    z.symmetrize();
    s.axpy(ad, ds);
    s.symmetrize();
    for (std::size_t i = 0; i < p; ++i) y[i] += ad * dy[i];
  }

  return finalize(ConeStatus::MaxIterations);
}

// ---------------------------------------------------------------------------
// Complex Hermitian programs on the real backend.

struct ComplexConstraint {
  CMatrix a;
  double b = 0.0;
  ConstraintSense sense = ConstraintSense::Equal;
};

struct ComplexSdp {
  CMatrix objective;
  std::vector<ComplexConstraint> constraints;
};

// Real embedding of a Hermitian SDP. Each Hermitian matrix M maps to
// embed(M)/2 so that Tr over the embedded pair equals the complex trace:
// Tr(embed(A)/2 * embed(Z)) = Tr(A Z). The factor 1/2 compensates the trace
// doubling of the embedding.
struct ComplexEmbedding {
  std::size_t n = 0;
  double scale = 0.5;
  ConeProgram program;

  CMatrix recover(const RMatrix& zreal) const { return hermitian_from_real_sym(zreal); }
};

inline ComplexEmbedding complexify(const ComplexSdp& in) {
  if (!is_hermitian(in.objective, 1e-10))
    throw ValidationError("complexify: objective matrix is not Hermitian");
  ComplexEmbedding out;
  out.n = in.objective.rows();
  out.program.c = 0.5 * hermitian_to_real_sym(in.objective);
  for (std::size_t i = 0; i < in.constraints.size(); ++i) {
    const auto& con = in.constraints[i];
    if (!is_hermitian(con.a, 1e-10))
      throw ValidationError("complexify: constraint " + std::to_string(i) +
                            " matrix is not Hermitian");
    out.program.constraints.push_back(
        ConeConstraint{0.5 * hermitian_to_real_sym(con.a), con.b, con.sense});
  }
  out.program.blocks = {2 * out.n};
  return out;
}

// ---------------------------------------------------------------------------
// Linear matrix inequality form:  min obj^T u  s.t.  F0 + sum_k u_k Fk >= 0.
// Fed to the backend through standard-form duality: the LMI variable u is the
// cone program's dual vector y.

struct LinearMatrixProgram {
  RMatrix f0;
  std::vector<RMatrix> fk;
  std::vector<double> objective;
};

struct LmiSolution {
  std::vector<double> u;
  double objective = 0.0;
  double lower_bound = 0.0;  // certified from the primal side
  ConeStatus status = ConeStatus::MaxIterations;
  ConeSolution cone;
};

inline ConeProgram lmi_to_cone_program(const LinearMatrixProgram& lmi) {
  if (lmi.fk.size() != lmi.objective.size())
    throw DimensionError("lmi_to_cone_program: coefficient count mismatch");
  ConeProgram prog;
  prog.c = lmi.f0;
  for (std::size_t k = 0; k < lmi.fk.size(); ++k)
    prog.constraints.push_back(ConeConstraint{-1.0 * lmi.fk[k], -lmi.objective[k],
                                              ConstraintSense::Equal});
  prog.blocks = {lmi.f0.rows()};
  return prog;
}

inline LmiSolution solve_lmi(const LinearMatrixProgram& lmi, double tol = 1e-8,
                             std::size_t max_iter = 200, std::ostream* trace = nullptr) {
  ConeSolution sol = solve_sdp(lmi_to_cone_program(lmi), tol, max_iter, trace);
  LmiSolution out;
  out.cone = sol;
  out.status = sol.status;
  out.u = sol.y;
  out.objective = 0.0;
  for (std::size_t k = 0; k < lmi.objective.size(); ++k)
    out.objective += lmi.objective[k] * sol.y[k];
  out.lower_bound = -sol.objective;
  return out;
}

}  // namespace qmp
