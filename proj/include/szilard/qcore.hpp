// Copyright 2026 The szilard-sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dense complex linear algebra and quantum-state primitives for small
// registers (up to ~8 qubits). Register convention: qubit 0 is the most
// significant bit of a basis index, so |b0 b1 ... b(n-1)> has index
// sum_q b_q * 2^(n-1-q).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace szilard {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;

inline constexpr double kAlgebraTol = 1e-10;
inline constexpr double kSpectralTol = 1e-8;

namespace detail {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t log2_exact(std::size_t n) {
  std::size_t k = 0;
  while ((std::size_t{1} << k) < n) ++k;
  return k;
}

inline double hermiticity_defect(const ComplexMatrix& m) {
  if (m.rows() != m.cols()) return INFINITY;
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline void require_square(const ComplexMatrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw std::invalid_argument(std::string(what) + ": matrix must be square and non-empty");
  }
}

inline std::size_t bit_of(std::size_t index, std::size_t qubit, std::size_t n) {
  return (index >> (n - 1 - qubit)) & 1U;
}

// Gathers the bits of `index` at `qubits` into a compact index, qubits[0]
// becoming the most significant bit.
inline std::size_t gather_bits(std::size_t index, std::span<const std::size_t> qubits, std::size_t n) {
  std::size_t out = 0;
  for (std::size_t q : qubits) out = (out << 1) | bit_of(index, q, n);
  return out;
}

inline void check_qubit_list(std::span<const std::size_t> qubits, std::size_t n, const char* what) {
  std::vector<bool> seen(n, false);
  for (std::size_t q : qubits) {
    if (q >= n) throw std::invalid_argument(std::string(what) + ": qubit index out of range");
    if (seen[q]) throw std::invalid_argument(std::string(what) + ": duplicate qubit index");
    seen[q] = true;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pauli matrices. sigma_z |0> = +|0>.

inline ComplexMatrix identity(std::size_t dim) { return ComplexMatrix::Identity(dim, dim); }

inline ComplexMatrix pauli_x() {
  ComplexMatrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

inline ComplexMatrix pauli_y() {
  ComplexMatrix m(2, 2);
  m << 0, Complex(0, -1), Complex(0, 1), 0;
  return m;
}

inline ComplexMatrix pauli_z() {
  ComplexMatrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

inline ComplexMatrix swap_matrix() {
  ComplexMatrix m = ComplexMatrix::Zero(4, 4);
  m(0, 0) = m(1, 2) = m(2, 1) = m(3, 3) = 1;
  return m;
}

// |index><index| on a register of dimension `dim`.
inline ComplexMatrix basis_projector(std::size_t dim, std::size_t index) {
  if (index >= dim) throw std::invalid_argument("basis_projector: index out of range");
  ComplexMatrix m = ComplexMatrix::Zero(dim, dim);
  m(index, index) = 1;
  return m;
}

// ---------------------------------------------------------------------------

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

/// Lifts `op` (acting on targets.size() qubits, targets[0] most significant)
/// to an n-qubit register, acting as identity on every other qubit.
inline ComplexMatrix embed(const ComplexMatrix& op, std::span<const std::size_t> targets, std::size_t n) {
  detail::check_qubit_list(targets, n, "embed");
  if (targets.empty()) throw std::invalid_argument("embed: empty target list");
  const std::size_t k = targets.size();
  if (op.rows() != op.cols() || static_cast<std::size_t>(op.rows()) != (std::size_t{1} << k)) {
    throw std::invalid_argument("embed: operator dimension does not match 2^targets");
  }
  std::size_t target_mask = 0;
  for (std::size_t q : targets) target_mask |= std::size_t{1} << (n - 1 - q);

  const std::size_t dim = std::size_t{1} << n;
  ComplexMatrix out = ComplexMatrix::Zero(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const std::size_t si = detail::gather_bits(i, targets, n);
    for (std::size_t j = 0; j < dim; ++j) {
      if ((i & ~target_mask) != (j & ~target_mask)) continue;
      out(i, j) = op(si, detail::gather_bits(j, targets, n));
    }
  }
  return out;
}

inline ComplexMatrix embed(const ComplexMatrix& op, std::initializer_list<std::size_t> targets, std::size_t n) {
  return embed(op, std::span<const std::size_t>(targets.begin(), targets.size()), n);
}

// ---------------------------------------------------------------------------
// Spectral functions. One backend: Hermitian eigendecomposition.

/// Applies f to the eigenvalues of a Hermitian matrix: V f(Lambda) V^dagger.
inline ComplexMatrix matrix_function(const ComplexMatrix& h, const std::function<Complex(double)>& f) {
  detail::require_square(h, "matrix_function");
  if (detail::hermiticity_defect(h) > kSpectralTol) {
    throw std::invalid_argument("matrix_function: input is not Hermitian");
  }
  const ComplexMatrix sym = 0.5 * (h + h.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(sym);
  const ComplexMatrix& v = es.eigenvectors();
  Eigen::VectorXcd fl(v.cols());
  for (Eigen::Index i = 0; i < fl.size(); ++i) fl(i) = f(es.eigenvalues()(i));
  return v * fl.asDiagonal() * v.adjoint();
}

inline RealVector hermitian_eigenvalues(const ComplexMatrix& h) {
  const ComplexMatrix sym = 0.5 * (h + h.adjoint());
  return Eigen::SelfAdjointEigenSolver<ComplexMatrix>(sym, Eigen::EigenvaluesOnly).eigenvalues();
}

/// exp(-i * generator * t) for a Hermitian generator.
inline ComplexMatrix expm_i(const ComplexMatrix& generator, double t) {
  return matrix_function(generator, [t](double l) { return std::exp(Complex(0, -l * t)); });
}

// ---------------------------------------------------------------------------

/// Unitary operator on a register of 2^n levels. U^dagger U = I to 1e-10.
class UnitaryOp {
 public:
  explicit UnitaryOp(ComplexMatrix m) : m_(std::move(m)) {
    detail::require_square(m_, "UnitaryOp");
    if (!detail::is_power_of_two(static_cast<std::size_t>(m_.rows()))) {
      throw std::invalid_argument("UnitaryOp: dimension must be a power of two");
    }
    const double defect = (m_.adjoint() * m_ - ComplexMatrix::Identity(m_.rows(), m_.cols())).cwiseAbs().maxCoeff();
    if (defect > kAlgebraTol) {
      throw std::invalid_argument("UnitaryOp: matrix is not unitary (defect " + std::to_string(defect) + ")");
    }
  }

  static UnitaryOp identity(std::size_t dim) { return UnitaryOp(ComplexMatrix::Identity(dim, dim)); }

  const ComplexMatrix& matrix() const { return m_; }
  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  std::size_t n_qubits() const { return detail::log2_exact(dim()); }

  UnitaryOp adjoint() const { return UnitaryOp(m_.adjoint()); }

  /// Composition: (*this) applied after `first`.
  UnitaryOp after(const UnitaryOp& first) const {
    if (first.dim() != dim()) throw std::invalid_argument("UnitaryOp::after: dimension mismatch");
    return UnitaryOp(m_ * first.m_);
  }

 private:
  ComplexMatrix m_;
};

/// Trace-one positive-semidefinite operator on 2^n levels. Checked on
/// construction: Hermitian, unit trace and eigenvalues >= -1e-10.
class DensityMatrix {
 public:
  explicit DensityMatrix(ComplexMatrix m) : m_(std::move(m)) {
    detail::require_square(m_, "DensityMatrix");
    if (!detail::is_power_of_two(static_cast<std::size_t>(m_.rows()))) {
      throw std::invalid_argument("DensityMatrix: dimension must be a power of two");
    }
    const double herm = detail::hermiticity_defect(m_);
    if (herm > kAlgebraTol) {
      throw std::invalid_argument("DensityMatrix: not Hermitian (defect " + std::to_string(herm) + ")");
    }
    m_ = 0.5 * (m_ + m_.adjoint());
    const Complex tr = m_.trace();
    if (std::abs(tr - 1.0) > kAlgebraTol) {
      throw std::invalid_argument("DensityMatrix: trace " + std::to_string(tr.real()) + " != 1");
    }
    const double min_eig = hermitian_eigenvalues(m_).minCoeff();
    if (min_eig < -kAlgebraTol) {
      throw std::invalid_argument("DensityMatrix: negative eigenvalue " + std::to_string(min_eig));
    }
  }

  static DensityMatrix basis_state(std::size_t dim, std::size_t index) {
    return DensityMatrix(basis_projector(dim, index));
  }

  static DensityMatrix maximally_mixed(std::size_t dim) {
    return DensityMatrix(ComplexMatrix::Identity(dim, dim) / static_cast<double>(dim));
  }

  static DensityMatrix pure(const Eigen::VectorXcd& psi) {
    const Eigen::VectorXcd n = psi / psi.norm();
    return DensityMatrix(n * n.adjoint());
  }

  const ComplexMatrix& matrix() const { return m_; }
  std::size_t dim() const { return static_cast<std::size_t>(m_.rows()); }
  std::size_t n_qubits() const { return detail::log2_exact(dim()); }
  RealVector eigenvalues() const { return hermitian_eigenvalues(m_); }
  double purity() const { return (m_ * m_).trace().real(); }

 private:
  ComplexMatrix m_;
};

inline ComplexMatrix tensor(const DensityMatrix& a, const DensityMatrix& b) { return kron(a.matrix(), b.matrix()); }

inline DensityMatrix product_state(std::span<const DensityMatrix> parts) {
  if (parts.empty()) throw std::invalid_argument("product_state: no factors");
  ComplexMatrix m = parts.front().matrix();
  for (std::size_t i = 1; i < parts.size(); ++i) m = kron(m, parts[i].matrix());
  return DensityMatrix(std::move(m));
}

inline DensityMatrix apply_unitary(const DensityMatrix& rho, const UnitaryOp& u) {
  if (rho.dim() != u.dim()) throw std::invalid_argument("apply_unitary: dimension mismatch");
  return DensityMatrix(u.matrix() * rho.matrix() * u.matrix().adjoint());
}

/// Reduced state on `keep`; the result orders qubits as listed in `keep`.
inline DensityMatrix partial_trace(const DensityMatrix& rho, std::span<const std::size_t> keep) {
  const std::size_t n = rho.n_qubits();
  if (keep.empty()) throw std::invalid_argument("partial_trace: keep list is empty");
  detail::check_qubit_list(keep, n, "partial_trace");

  std::size_t keep_mask = 0;
  for (std::size_t q : keep) keep_mask |= std::size_t{1} << (n - 1 - q);

  const std::size_t dim = rho.dim();
  const std::size_t out_dim = std::size_t{1} << keep.size();
  ComplexMatrix out = ComplexMatrix::Zero(out_dim, out_dim);
  const ComplexMatrix& m = rho.matrix();
  for (std::size_t i = 0; i < dim; ++i) {
    const std::size_t ki = detail::gather_bits(i, keep, n);
    for (std::size_t j = 0; j < dim; ++j) {
      if ((i & ~keep_mask) != (j & ~keep_mask)) continue;
      out(ki, detail::gather_bits(j, keep, n)) += m(i, j);
    }
  }
  return DensityMatrix(std::move(out));
}

inline DensityMatrix partial_trace(const DensityMatrix& rho, std::initializer_list<std::size_t> keep) {
  return partial_trace(rho, std::span<const std::size_t>(keep.begin(), keep.size()));
}

inline DensityMatrix reduced_qubit(const DensityMatrix& rho, std::size_t qubit) {
  const std::size_t keep[] = {qubit};
  return partial_trace(rho, keep);
}

/// Tr[rho * op].
inline double expectation(const DensityMatrix& rho, const ComplexMatrix& op) {
  if (static_cast<std::size_t>(op.rows()) != rho.dim() || op.rows() != op.cols()) {
    throw std::invalid_argument("expectation: dimension mismatch");
  }
  return (rho.matrix() * op).trace().real();
}

/// Von Neumann entropy in nats. Eigenvalues below 1e-12 count as zero.
inline double von_neumann_entropy(const DensityMatrix& rho) {
  double s = 0.0;
  for (double l : rho.eigenvalues()) {
    if (l > 1e-12) s -= l * std::log(l);
  }
  return std::max(0.0, s);
}

/// Uhlmann fidelity tr sqrt(sqrt(a) b sqrt(a)), in [0, 1].
inline double fidelity(const DensityMatrix& a, const DensityMatrix& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("fidelity: dimension mismatch");
  const ComplexMatrix sa = matrix_function(a.matrix(), [](double l) { return Complex(std::sqrt(std::max(l, 0.0)), 0); });
  ComplexMatrix inner = sa * b.matrix() * sa;
  inner = 0.5 * (inner + inner.adjoint());
  double f = 0.0;
  for (double l : hermitian_eigenvalues(inner)) f += std::sqrt(std::max(l, 0.0));
  return std::clamp(f, 0.0, 1.0);
}

inline double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("trace_distance: dimension mismatch");
  double d = 0.0;
  for (double l : hermitian_eigenvalues(a.matrix() - b.matrix())) d += std::abs(l);
  return 0.5 * d;
}

/// Binary entropy in nats.
inline double binary_entropy(double p) {
  double s = 0.0;
  if (p > 0.0) s -= p * std::log(p);
  if (p < 1.0) s -= (1.0 - p) * std::log(1.0 - p);
  return s;
}

}  // namespace szilard
