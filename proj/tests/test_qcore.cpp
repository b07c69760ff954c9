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

#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "random_states.hpp"
#include "szilard/qcore.hpp"

namespace szilard {
namespace {

using testing::max_abs;

void expect_valid(const DensityMatrix& r) {
  const ComplexMatrix& m = r.matrix();
  EXPECT_LE(max_abs(m - m.adjoint()), 1e-10);
  EXPECT_NEAR(m.trace().real(), 1.0, 1e-10);
  EXPECT_GE(r.eigenvalues().minCoeff(), -1e-10);
}

TEST(Kron, IdentityTimesIdentity) { EXPECT_LE(max_abs(kron(identity(2), identity(2)) - identity(4)), 0.0); }

TEST(Kron, SigmaZWithIdentity) {
  ComplexMatrix expected = ComplexMatrix::Zero(4, 4);
  expected.diagonal() << 1, 1, -1, -1;
  EXPECT_LE(max_abs(kron(pauli_z(), identity(2)) - expected), 0.0);
}

TEST(Kron, MatchesNestedLoops) {
  std::mt19937_64 rng(11);
  const ComplexMatrix a = testing::random_matrix(2, rng);
  const ComplexMatrix b = testing::random_matrix(4, rng);
  const ComplexMatrix k = kron(a, b);
  ASSERT_EQ(k.rows(), 8);
  ASSERT_EQ(k.cols(), 8);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) EXPECT_EQ(k(4 * i + r, 4 * j + c), a(i, j) * b(r, c));
}

TEST(Embed, SecondQubit) { EXPECT_LE(max_abs(embed(pauli_x(), {1}, 2) - kron(identity(2), pauli_x())), 0.0); }

TEST(Embed, SwapOnBothQubitsIsSwap) { EXPECT_LE(max_abs(embed(swap_matrix(), {0, 1}, 2) - swap_matrix()), 0.0); }

TEST(Embed, FirstQubitIsMostSignificant) {
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(4);
  psi(0) = 1;  // |00>
  const Eigen::VectorXcd out = embed(pauli_x(), {0}, 2) * psi;
  Eigen::VectorXcd expected = Eigen::VectorXcd::Zero(4);
  expected(2) = 1;  // |10>
  EXPECT_LE((out - expected).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Embed, ReversedTargetsReverseTheOperator) {
  ComplexMatrix cnot = ComplexMatrix::Identity(4, 4);
  cnot.block(2, 2, 2, 2) = pauli_x();
  const ComplexMatrix flipped = embed(cnot, {1, 0}, 2);
  // control on qubit 1: |01> -> |11>
  EXPECT_EQ(flipped(3, 1), Complex(1, 0));
  EXPECT_EQ(flipped(0, 0), Complex(1, 0));
}

TEST(Embed, RejectsBadTargets) {
  EXPECT_THROW(embed(pauli_x(), {2}, 2), std::invalid_argument);
  EXPECT_THROW(embed(swap_matrix(), {1, 1}, 2), std::invalid_argument);
  EXPECT_THROW(embed(swap_matrix(), {0}, 2), std::invalid_argument);
}

TEST(ApplyUnitary, IdentityLeavesStateAlone) {
  std::mt19937_64 rng(3);
  const auto rho = testing::random_density(4, rng);
  EXPECT_LE(max_abs(apply_unitary(rho, UnitaryOp::identity(4)).matrix() - rho.matrix()), 1e-15);
}

TEST(ApplyUnitary, FlipsGroundToExcited) {
  const auto out = apply_unitary(DensityMatrix::basis_state(2, 0), UnitaryOp(pauli_x()));
  EXPECT_LE(max_abs(out.matrix() - basis_projector(2, 1)), 1e-15);
}

TEST(ApplyUnitary, PreservesSpectrum) {
  std::mt19937_64 rng(5);
  const auto rho = testing::random_density(16, rng);
  const auto u = testing::random_unitary(16, rng);
  const auto out = apply_unitary(rho, u);
  expect_valid(out);
  RealVector a = rho.eigenvalues(), b = out.eigenvalues();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ApplyUnitary, DimensionMismatchThrows) {
  EXPECT_THROW(apply_unitary(DensityMatrix::maximally_mixed(4), UnitaryOp::identity(2)), std::invalid_argument);
}

TEST(UnitaryOp, RejectsNonUnitary) {
  EXPECT_THROW(UnitaryOp(2.0 * identity(2)), std::invalid_argument);
  EXPECT_THROW(UnitaryOp(identity(3)), std::invalid_argument);
}

TEST(DensityMatrix, RejectsInvalidMatrices) {
  EXPECT_THROW(DensityMatrix(identity(2)), std::invalid_argument);
  EXPECT_THROW(DensityMatrix(pauli_z() + identity(2) * 0.5), std::invalid_argument);
  ComplexMatrix nonherm = identity(2) / 2.0;
  nonherm(0, 1) = 0.1;
  EXPECT_THROW(DensityMatrix{nonherm}, std::invalid_argument);
}

TEST(PartialTrace, ProductState) {
  std::mt19937_64 rng(8);
  const auto a = testing::random_density(2, rng);
  const auto b = testing::random_density(4, rng);
  const DensityMatrix ab(tensor(a, b));
  EXPECT_LE(max_abs(partial_trace(ab, {0}).matrix() - a.matrix()), 1e-12);
  EXPECT_LE(max_abs(partial_trace(ab, {1, 2}).matrix() - b.matrix()), 1e-12);
}

TEST(PartialTrace, BellStateMarginalsAreMixed) {
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(4);
  psi(0) = psi(3) = 1.0 / std::sqrt(2.0);
  const auto bell = DensityMatrix::pure(psi);
  for (std::size_t q : {0, 1}) {
    EXPECT_LE(max_abs(reduced_qubit(bell, q).matrix() - identity(2) / 2.0), 1e-12);
  }
}

TEST(PartialTrace, ExpectationMatchesFullRegister) {
  std::mt19937_64 rng(13);
  const auto rho = testing::random_density(16, rng);
  const double reduced = expectation(partial_trace(rho, {1}), pauli_z());
  const double full = expectation(rho, embed(pauli_z(), {1}, 4));
  EXPECT_NEAR(reduced, full, 1e-12);
}

TEST(PartialTrace, SuccessiveTracesCompose) {
  std::mt19937_64 rng(17);
  const auto rho = testing::random_density(16, rng);
  // trace out qubit 0, then (old) qubit 3, versus both at once
  const auto step = partial_trace(rho, {1, 2, 3});
  const auto twice = partial_trace(step, {0, 1});
  const auto once = partial_trace(rho, {1, 2});
  expect_valid(twice);
  EXPECT_LE(max_abs(twice.matrix() - once.matrix()), 1e-12);
}

TEST(PartialTrace, EmptyKeepThrows) {
  const std::vector<std::size_t> none;
  EXPECT_THROW(partial_trace(DensityMatrix::maximally_mixed(4), none), std::invalid_argument);
  EXPECT_THROW(partial_trace(DensityMatrix::maximally_mixed(4), {0, 0}), std::invalid_argument);
}

TEST(MatrixFunction, ExpOfZeroIsIdentity) {
  const auto e = matrix_function(ComplexMatrix::Zero(4, 4), [](double l) { return Complex(std::exp(l), 0); });
  EXPECT_LE(max_abs(e - identity(4)), 1e-15);
}

TEST(MatrixFunction, SqrtOfDiagonal) {
  ComplexMatrix d = ComplexMatrix::Zero(2, 2);
  d.diagonal() << 4, 9;
  ComplexMatrix expected = ComplexMatrix::Zero(2, 2);
  expected.diagonal() << 2, 3;
  const auto s = matrix_function(d, [](double l) { return Complex(std::sqrt(l), 0); });
  EXPECT_LE(max_abs(s - expected), 1e-12);
}

TEST(MatrixFunction, RotationClosedForm) {
  const double theta = 0.7;
  const ComplexMatrix u = expm_i(pauli_x(), theta / 2);
  const ComplexMatrix expected = std::cos(theta / 2) * identity(2) - Complex(0, std::sin(theta / 2)) * pauli_x();
  EXPECT_LE(max_abs(u - expected), 1e-12);
}

TEST(MatrixFunction, ExpMatchesTaylorSeries) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    ComplexMatrix h = testing::random_hermitian(8, rng);
    h *= 5.0 / h.operatorNorm();
    // e^{h/8} by 30 Taylor terms, then squared three times
    const ComplexMatrix small = h / 8.0;
    ComplexMatrix term = identity(8), sum = identity(8);
    for (int k = 1; k <= 30; ++k) {
      term = term * small / static_cast<double>(k);
      sum += term;
    }
    for (int s = 0; s < 3; ++s) sum = sum * sum;
    const auto e = matrix_function(h, [](double l) { return Complex(std::exp(l), 0); });
    EXPECT_LE(max_abs(e - sum), 1e-8);
  }
}

TEST(MatrixFunction, RejectsNonHermitian) {
  ComplexMatrix m = identity(2);
  m(0, 1) = 1.0;
  EXPECT_THROW(matrix_function(m, [](double l) { return Complex(l, 0); }), std::invalid_argument);
}

TEST(Entropy, PureStateIsZero) { EXPECT_NEAR(von_neumann_entropy(DensityMatrix::basis_state(4, 2)), 0.0, 1e-12); }

TEST(Entropy, MaximallyMixedQubit) {
  EXPECT_NEAR(von_neumann_entropy(DensityMatrix::maximally_mixed(2)), std::log(2.0), 1e-12);
}

TEST(Entropy, DiagonalState) {
  ComplexMatrix d = ComplexMatrix::Zero(2, 2);
  d.diagonal() << 0.87861, 0.12139;
  EXPECT_NEAR(von_neumann_entropy(DensityMatrix(d)), 0.36968535132718383, 1e-12);
}

TEST(Entropy, BoundedAndUnitarilyInvariant) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    const auto rho = testing::random_density(16, rng);
    const double s = von_neumann_entropy(rho);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, std::log(16.0) + 1e-12);
    EXPECT_NEAR(von_neumann_entropy(apply_unitary(rho, testing::random_unitary(16, rng))), s, 1e-9);
  }
}

TEST(Fidelity, SelfFidelityIsOne) {
  std::mt19937_64 rng(31);
  const auto rho = testing::random_density(8, rng);
  EXPECT_NEAR(fidelity(rho, rho), 1.0, 1e-9);
}

TEST(Fidelity, OrthogonalStates) {
  EXPECT_NEAR(fidelity(DensityMatrix::basis_state(2, 0), DensityMatrix::basis_state(2, 1)), 0.0, 1e-12);
}

TEST(Fidelity, PureAgainstMixed) {
  EXPECT_NEAR(fidelity(DensityMatrix::basis_state(2, 0), DensityMatrix::maximally_mixed(2)), 1.0 / std::sqrt(2.0),
              1e-12);
}

TEST(Fidelity, SymmetricOnRandomStates) {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = testing::random_density(16, rng);
    const auto b = testing::random_density(16, rng);
    const double f = fidelity(a, b);
    EXPECT_GE(f, 0.0);
    EXPECT_LT(f, 1.0);
    EXPECT_NEAR(f, fidelity(b, a), 1e-10);
  }
}

TEST(Fidelity, DimensionMismatchThrows) {
  EXPECT_THROW(fidelity(DensityMatrix::maximally_mixed(2), DensityMatrix::maximally_mixed(4)), std::invalid_argument);
}

}  // namespace
}  // namespace szilard
