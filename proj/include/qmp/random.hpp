#pragma once

// Seeded random matrix generators shared by the scenario generator and the
// test suites. All draws go through one mt19937_64 stream so a fixed seed
// reproduces the exact same data.

#include <cstdint>
#include <random>

#include "qmp/matrix.hpp"

namespace qmp {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double normal() { return normal_(gen_); }
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform_(gen_);
  }
  std::uint64_t next_seed() { return gen_(); }

  // Circularly symmetric complex Gaussian with unit variance per entry:
  // real and imaginary parts each N(0, 1/2).
  cplx cnormal() {
    static const double kInvSqrt2 = 0.7071067811865475244;
    return cplx(normal() * kInvSqrt2, normal() * kInvSqrt2);
  }

  CMatrix gaussian(std::size_t rows, std::size_t cols) {
    CMatrix m(rows, cols);
    for (auto& v : m.entries()) v = cnormal();
    return m;
  }

  RMatrix gaussian_real(std::size_t rows, std::size_t cols) {
    RMatrix m(rows, cols);
    for (auto& v : m.entries()) v = normal();
    return m;
  }

  CMatrix hermitian(std::size_t n) { return hermitian_part(gaussian(n, n)); }

  RMatrix symmetric(std::size_t n) {
    RMatrix g = gaussian_real(n, n);
    RMatrix s(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) s(i, j) = 0.5 * (g(i, j) + g(j, i));
    return s;
  }

  // G^H G / n, Hermitian PSD (almost surely PD for n draws).
  CMatrix psd(std::size_t n) {
    CMatrix g = gaussian(n, n);
    return hermitian_part(adjoint(g) * g * (1.0 / double(n)));
  }

  // PSD plus a ridge, comfortably positive definite.
  CMatrix pd(std::size_t n, double ridge = 0.5) {
    return hermitian_part(psd(n) + ridge * CMatrix::identity(n));
  }

  // Random unitary matrix (eigenvectors of a random Hermitian draw).
  CMatrix unitary(std::size_t n) { return hermitian_eig(hermitian(n)).eigenvectors; }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace qmp
