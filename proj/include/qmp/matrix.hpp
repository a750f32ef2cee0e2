#pragma once

// Dense matrix primitives used throughout: complex/real rectangular matrices
// with value semantics, Kronecker/vec identities, Hermitian Jacobi
// eigendecomposition, PSD square roots and the complex-to-real embeddings.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qmp/errors.hpp"

namespace qmp {

using cplx = std::complex<double>;

inline double conj_of(double x) { return x; }
inline cplx conj_of(const cplx& x) { return std::conj(x); }
inline double real_of(double x) { return x; }
inline double real_of(const cplx& x) { return x.real(); }
inline double abs2_of(double x) { return x * x; }
inline double abs2_of(const cplx& x) { return std::norm(x); }

template <class Scalar>
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, Scalar{}) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<Scalar> entries)
      : rows_(rows), cols_(cols), data_(std::move(entries)) {
    if (data_.size() != rows_ * cols_)
      throw DimensionError("DenseMatrix: entry count does not match rows*cols");
  }

  static DenseMatrix identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = Scalar(1);
    return m;
  }
  // Rectangular identity-like matrix: ones on the main diagonal.
  static DenseMatrix eye(std::size_t rows, std::size_t cols) {
    DenseMatrix m(rows, cols);
    for (std::size_t i = 0; i < std::min(rows, cols); ++i) m(i, i) = Scalar(1);
    return m;
  }
  static DenseMatrix zero(std::size_t rows, std::size_t cols) { return DenseMatrix(rows, cols); }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool square() const { return rows_ == cols_; }

  Scalar& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const Scalar& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  Scalar& at(std::size_t r, std::size_t c) {
    check_index(r, c);
    return (*this)(r, c);
  }
  const Scalar& at(std::size_t r, std::size_t c) const {
    check_index(r, c);
    return (*this)(r, c);
  }

  std::vector<Scalar>& entries() { return data_; }
  const std::vector<Scalar>& entries() const { return data_; }

  DenseMatrix& operator+=(const DenseMatrix& o) {
    check_same_shape(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  DenseMatrix& operator-=(const DenseMatrix& o) {
    check_same_shape(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  template <class S>
  DenseMatrix& operator*=(const S& s) {
    for (auto& v : data_) v = v * Scalar(s);
    return *this;
  }

  friend DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
  friend DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
  friend DenseMatrix operator-(const DenseMatrix& a) {
    DenseMatrix r(a.rows_, a.cols_);
    for (std::size_t i = 0; i < a.data_.size(); ++i) r.data_[i] = -a.data_[i];
    return r;
  }

  friend DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols_ != b.rows_)
      throw DimensionError("matrix product: inner dimensions mismatch (" +
                           std::to_string(a.cols_) + " vs " + std::to_string(b.rows_) + ")");
    DenseMatrix r(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i) {
      const Scalar* arow = a.data_.data() + i * a.cols_;
      Scalar* rrow = r.data_.data() + i * b.cols_;
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const Scalar aik = arow[k];
        if (aik == Scalar{}) continue;
        const Scalar* brow = b.data_.data() + k * b.cols_;
        for (std::size_t j = 0; j < b.cols_; ++j) rrow[j] += aik * brow[j];
      }
    }
    return r;
  }
  template <class S>
  friend DenseMatrix operator*(DenseMatrix a, const S& s) {
    return a *= s;
  }
  template <class S>
  friend DenseMatrix operator*(const S& s, DenseMatrix a) {
    return a *= s;
  }

 private:
  void check_index(std::size_t r, std::size_t c) const {
    if (r >= rows_ || c >= cols_) throw DimensionError("matrix index out of range");
  }
  void check_same_shape(const DenseMatrix& o, const char* op) const {
    if (rows_ != o.rows_ || cols_ != o.cols_)
      throw DimensionError(std::string("matrix ") + op + ": shape mismatch");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Scalar> data_;
};

using CMatrix = DenseMatrix<cplx>;
using RMatrix = DenseMatrix<double>;

template <class Scalar>
DenseMatrix<Scalar> transpose(const DenseMatrix<Scalar>& m) {
  DenseMatrix<Scalar> r(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) r(j, i) = m(i, j);
  return r;
}

template <class Scalar>
DenseMatrix<Scalar> conjugate(const DenseMatrix<Scalar>& m) {
  DenseMatrix<Scalar> r(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) r(i, j) = conj_of(m(i, j));
  return r;
}

template <class Scalar>
DenseMatrix<Scalar> adjoint(const DenseMatrix<Scalar>& m) {
  DenseMatrix<Scalar> r(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) r(j, i) = conj_of(m(i, j));
  return r;
}

template <class Scalar>
Scalar trace(const DenseMatrix<Scalar>& m) {
  if (!m.square()) throw DimensionError("trace: matrix not square");
  Scalar t{};
  for (std::size_t i = 0; i < m.rows(); ++i) t += m(i, i);
  return t;
}

template <class Scalar>
double frobenius_norm(const DenseMatrix<Scalar>& m) {
  double s = 0;
  for (const auto& v : m.entries()) s += abs2_of(v);
  return std::sqrt(s);
}

template <class Scalar>
double max_abs(const DenseMatrix<Scalar>& m) {
  double s = 0;
  for (const auto& v : m.entries()) s = std::max(s, std::abs(v));
  return s;
}

// Tr(A B) without forming the product; A is p x q, B is q x p.
template <class Scalar>
Scalar trace_product(const DenseMatrix<Scalar>& a, const DenseMatrix<Scalar>& b) {
  if (a.cols() != b.rows() || a.rows() != b.cols())
    throw DimensionError("trace_product: shapes incompatible");
  Scalar t{};
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) t += a(i, k) * b(k, i);
  return t;
}

template <class Scalar>
DenseMatrix<Scalar> hermitian_part(const DenseMatrix<Scalar>& m) {
  if (!m.square()) throw DimensionError("hermitian_part: matrix not square");
  DenseMatrix<Scalar> r(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      r(i, j) = (m(i, j) + conj_of(m(j, i))) * 0.5;
  return r;
}

template <class Scalar>
bool is_hermitian(const DenseMatrix<Scalar>& m, double tol = 1e-10) {
  if (!m.square()) return false;
  double dev = 0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      dev += abs2_of(m(i, j) - conj_of(m(j, i)));
  return std::sqrt(dev) <= tol * std::max(1.0, frobenius_norm(m));
}

// Column-stacking: vec(X) stacks the columns of X top to bottom.
template <class Scalar>
DenseMatrix<Scalar> vec(const DenseMatrix<Scalar>& x) {
  DenseMatrix<Scalar> v(x.rows() * x.cols(), 1);
  std::size_t idx = 0;
  for (std::size_t c = 0; c < x.cols(); ++c)
    for (std::size_t r = 0; r < x.rows(); ++r) v(idx++, 0) = x(r, c);
  return v;
}

template <class Scalar>
DenseMatrix<Scalar> unvec(const DenseMatrix<Scalar>& v, std::size_t rows, std::size_t cols) {
  if (v.cols() != 1 || v.rows() != rows * cols)
    throw DimensionError("unvec: vector length does not match rows*cols");
  DenseMatrix<Scalar> x(rows, cols);
  std::size_t idx = 0;
  for (std::size_t c = 0; c < cols; ++c)
    for (std::size_t r = 0; r < rows; ++r) x(r, c) = v(idx++, 0);
  return x;
}

template <class Scalar>
DenseMatrix<Scalar> kron(const DenseMatrix<Scalar>& a, const DenseMatrix<Scalar>& b) {
  DenseMatrix<Scalar> r(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const Scalar aij = a(i, j);
      if (aij == Scalar{}) continue;
      for (std::size_t k = 0; k < b.rows(); ++k)
        for (std::size_t l = 0; l < b.cols(); ++l)
          r(i * b.rows() + k, j * b.cols() + l) = aij * b(k, l);
    }
  return r;
}

inline RMatrix real_part(const CMatrix& m) {
  RMatrix r(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) r(i, j) = m(i, j).real();
  return r;
}

inline RMatrix imag_part(const CMatrix& m) {
  RMatrix r(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) r(i, j) = m(i, j).imag();
  return r;
}

inline CMatrix to_complex(const RMatrix& m) {
  CMatrix r(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) r(i, j) = cplx(m(i, j), 0.0);
  return r;
}

// [Re(v); Im(v)] stacking of a complex column vector. Norm preserving.
inline RMatrix real_embed_vector(const CMatrix& v) {
  if (v.cols() != 1) throw DimensionError("real_embed_vector: expected a column vector");
  RMatrix r(2 * v.rows(), 1);
  for (std::size_t i = 0; i < v.rows(); ++i) {
    r(i, 0) = v(i, 0).real();
    r(i + v.rows(), 0) = v(i, 0).imag();
  }
  return r;
}

inline CMatrix complex_from_embedded(const RMatrix& v) {
  if (v.cols() != 1 || v.rows() % 2 != 0)
    throw DimensionError("complex_from_embedded: expected an even-length column vector");
  const std::size_t n = v.rows() / 2;
  CMatrix r(n, 1);
  for (std::size_t i = 0; i < n; ++i) r(i, 0) = cplx(v(i, 0), v(i + n, 0));
  return r;
}

// [[Re M, -Im M], [Im M, Re M]] for Hermitian M. Result is symmetric, PSD iff
// M is PSD, and Tr(result) = 2 Tr(M).
inline RMatrix hermitian_to_real_sym(const CMatrix& m) {
  if (!m.square()) throw DimensionError("hermitian_to_real_sym: matrix not square");
  if (!is_hermitian(m, 1e-10))
    throw ValidationError("hermitian_to_real_sym: matrix is not Hermitian");
  const CMatrix h = hermitian_part(m);
  const std::size_t n = h.rows();
  RMatrix r(2 * n, 2 * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double re = h(i, j).real();
      const double im = h(i, j).imag();
      r(i, j) = re;
      r(i + n, j + n) = re;
      r(i, j + n) = -im;
      r(i + n, j) = im;
    }
  return r;
}

// Inverse of hermitian_to_real_sym for a general symmetric 2n x 2n matrix:
// averages the two real blocks and antisymmetrizes the imaginary ones, which
// projects onto the embedded-Hermitian subspace.
inline CMatrix hermitian_from_real_sym(const RMatrix& z) {
  if (!z.square() || z.rows() % 2 != 0)
    throw DimensionError("hermitian_from_real_sym: expected an even square matrix");
  const std::size_t n = z.rows() / 2;
  CMatrix r(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double re = 0.5 * (z(i, j) + z(i + n, j + n));
      const double im = 0.5 * (z(i + n, j) - z(i, j + n));
      r(i, j) = cplx(re, im);
    }
  return hermitian_part(r);
}

// ---------------------------------------------------------------------------
// Hermitian eigendecomposition (cyclic Jacobi).

struct HermitianEig {
  std::vector<double> eigenvalues;  // sorted descending
  CMatrix eigenvectors;             // unitary, columns match eigenvalues
};

namespace detail {

inline double off_diagonal_norm(const CMatrix& a) {
  double s = 0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += std::norm(a(i, j));
  return std::sqrt(s);
}

}  // namespace detail

inline HermitianEig hermitian_eig(const CMatrix& m_in) {
  if (!m_in.square()) throw DimensionError("hermitian_eig: matrix not square");
  const std::size_t n = m_in.rows();
  CMatrix a = hermitian_part(m_in);
  CMatrix v = CMatrix::identity(n);
  const double scale = std::max(1.0, frobenius_norm(a));
  const double tol = 1e-14 * scale;

  bool converged = (n <= 1);
  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    if (detail::off_diagonal_norm(a) <= tol) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const cplx b = a(p, q);
        const double beta = std::abs(b);
        if (beta <= 1e-300 || beta <= 1e-18 * scale) continue;
        const cplx phase = b / beta;
        const double app = a(p, p).real();
        const double aqq = a(q, q).real();
        const double tau = (aqq - app) / (2.0 * beta);
        const double t = (tau >= 0.0) ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                      : -1.0 / (-tau + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        const cplx sigma = s * phase;

        // rows p, q of A <- J^H A
        for (std::size_t k = 0; k < n; ++k) {
          const cplx apk = a(p, k);
          const cplx aqk = a(q, k);
          a(p, k) = c * apk - sigma * aqk;
          a(q, k) = conj_of(sigma) * apk + c * aqk;
        }
        // cols p, q of A <- A J
        for (std::size_t k = 0; k < n; ++k) {
          const cplx akp = a(k, p);
          const cplx akq = a(k, q);
          a(k, p) = akp * c - akq * conj_of(sigma);
          a(k, q) = akp * sigma + akq * c;
        }
        // clean roundoff drift on the rotated pair
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        a(p, p) = cplx(a(p, p).real(), 0.0);
        a(q, q) = cplx(a(q, q).real(), 0.0);

        // accumulate V <- V J
        for (std::size_t k = 0; k < n; ++k) {
          const cplx vkp = v(k, p);
          const cplx vkq = v(k, q);
          v(k, p) = vkp * c - vkq * conj_of(sigma);
          v(k, q) = vkp * sigma + vkq * c;
        }
      }
    }
  }
  if (!converged && detail::off_diagonal_norm(a) > 1e-10 * scale)
    throw NumericalError("hermitian_eig: Jacobi iteration did not converge");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = a(i, i).real();
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return diag[x] > diag[y]; });

  HermitianEig out;
  out.eigenvalues.resize(n);
  out.eigenvectors = CMatrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.eigenvalues[j] = diag[order[j]];
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, j) = v(i, order[j]);
  }
  return out;
}

struct SymmetricEig {
  std::vector<double> eigenvalues;  // descending
  RMatrix eigenvectors;             // orthogonal columns
};

// Real symmetric eigendecomposition through the complex Jacobi kernel. For
// real input all rotations stay real, so the eigenvectors come out real.
inline SymmetricEig symmetric_eig(const RMatrix& m) {
  HermitianEig he = hermitian_eig(to_complex(m));
  SymmetricEig out;
  out.eigenvalues = std::move(he.eigenvalues);
  out.eigenvectors = real_part(he.eigenvectors);
  return out;
}

inline double min_eigenvalue(const CMatrix& m) {
  const HermitianEig e = hermitian_eig(m);
  return e.eigenvalues.back();
}

inline bool is_positive_definite(const CMatrix& m, double rel = 1e-9) {
  if (!m.square() || m.rows() == 0) return false;
  const HermitianEig e = hermitian_eig(m);
  return e.eigenvalues.back() > rel * std::max(1e-300, frobenius_norm(m));
}

inline bool is_positive_semidefinite(const CMatrix& m, double rel = 1e-8) {
  if (!m.square()) return false;
  if (m.rows() == 0) return true;
  const HermitianEig e = hermitian_eig(m);
  return e.eigenvalues.back() >= -rel * std::max(1.0, frobenius_norm(m));
}

namespace detail {

// V f(lambda) V^H with eigenvalues filtered/transformed by fn.
template <class Fn>
CMatrix eig_apply(const HermitianEig& e, Fn fn) {
  const std::size_t n = e.eigenvectors.rows();
  CMatrix r(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const double fk = fn(e.eigenvalues[k]);
    if (fk == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) {
      const cplx vik = e.eigenvectors(i, k);
      if (vik == cplx{}) continue;
      for (std::size_t j = 0; j < n; ++j)
        r(i, j) += fk * vik * conj_of(e.eigenvectors(j, k));
    }
  }
  return hermitian_part(r);
}

}  // namespace detail

// Hermitian square root of a PSD matrix. Eigenvalues in [-1e-8*||M||_F, 0)
// are clamped to zero; anything below that threshold is an error.
inline CMatrix psd_sqrt(const CMatrix& m) {
  const double nrm = frobenius_norm(m);
  const HermitianEig e = hermitian_eig(m);
  const double floor = -1e-8 * nrm;
  for (double lam : e.eigenvalues)
    if (lam < floor)
      throw NotPsdError("psd_sqrt: matrix has eigenvalue " + std::to_string(lam) +
                        " below the PSD tolerance");
  return detail::eig_apply(e, [](double l) { return l > 0 ? std::sqrt(l) : 0.0; });
}

// Inverse Hermitian square root; requires a positive definite input.
inline CMatrix psd_inv_sqrt(const CMatrix& m) {
  const HermitianEig e = hermitian_eig(m);
  const double scale = std::max(1e-300, frobenius_norm(m));
  if (e.eigenvalues.back() <= 1e-12 * scale)
    throw NotPsdError("psd_inv_sqrt: matrix is not positive definite");
  return detail::eig_apply(e, [](double l) { return 1.0 / std::sqrt(l); });
}

// Solve A X = B for Hermitian positive definite A.
inline CMatrix hermitian_solve(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != b.rows()) throw DimensionError("hermitian_solve: shape mismatch");
  const HermitianEig e = hermitian_eig(a);
  const double scale = std::max(1e-300, frobenius_norm(a));
  if (e.eigenvalues.back() <= 1e-12 * scale)
    throw NotPsdError("hermitian_solve: matrix is not positive definite");
  const CMatrix inv = detail::eig_apply(e, [](double l) { return 1.0 / l; });
  return inv * b;
}

// Minimum-norm solve A X = B for Hermitian PSD A (pseudo-inverse on the
// positive eigenspace). Components of B outside range(A) are dropped.
inline CMatrix hermitian_pinv_solve(const CMatrix& a, const CMatrix& b,
                                    double rel_cut = 1e-12) {
  if (a.rows() != b.rows()) throw DimensionError("hermitian_pinv_solve: shape mismatch");
  const HermitianEig e = hermitian_eig(a);
  const double cut = rel_cut * std::max(1.0, e.eigenvalues.empty() ? 0.0 : std::abs(e.eigenvalues.front()));
  const CMatrix pinv = detail::eig_apply(e, [&](double l) { return l > cut ? 1.0 / l : 0.0; });
  return pinv * b;
}

// ---------------------------------------------------------------------------
// Real Cholesky (lower triangular), used by the conic backend.

// Returns the lower factor of a symmetric positive definite matrix, or
// nullopt if a pivot fails (matrix not PD within roundoff).
inline std::optional<RMatrix> cholesky(const RMatrix& a) {
  if (!a.square()) throw DimensionError("cholesky: matrix not square");
  const std::size_t n = a.rows();
  RMatrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) return std::nullopt;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

// Solve L X = B in place (L lower triangular).
inline RMatrix lower_solve(const RMatrix& l, RMatrix b) {
  const std::size_t n = l.rows();
  for (std::size_t c = 0; c < b.cols(); ++c)
    for (std::size_t i = 0; i < n; ++i) {
      double s = b(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * b(k, c);
      b(i, c) = s / l(i, i);
    }
  return b;
}

// Solve L^T X = B in place.
inline RMatrix lower_transpose_solve(const RMatrix& l, RMatrix b) {
  const std::size_t n = l.rows();
  for (std::size_t c = 0; c < b.cols(); ++c)
    for (std::size_t ii = n; ii-- > 0;) {
      double s = b(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * b(k, c);
      b(ii, c) = s / l(ii, ii);
    }
  return b;
}

// A^{-1} B for symmetric positive definite A via Cholesky.
inline RMatrix spd_solve(const RMatrix& a, const RMatrix& b) {
  auto l = cholesky(a);
  if (!l) throw NotPsdError("spd_solve: matrix is not positive definite");
  return lower_transpose_solve(*l, lower_solve(*l, b));
}

}  // namespace qmp
