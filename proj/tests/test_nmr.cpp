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
#include <sstream>

#include "random_states.hpp"
#include "szilard/nmr.hpp"

namespace szilard::nmr {
namespace {

using szilard::testing::max_abs;
constexpr double kPi = std::numbers::pi;

MoleculeSpec make_molecule(std::vector<double> offsets, std::vector<std::vector<double>> j, double t1 = 10.0,
                           double t2 = 1.0) {
  MoleculeSpec m;
  m.n_spins = offsets.size();
  m.frequencies = std::move(offsets);
  m.couplings = std::move(j);
  m.t1.assign(m.n_spins, t1);
  m.t2.assign(m.n_spins, t2);
  return m;
}

MoleculeSpec one_spin(double offset = 0.0, double t1 = 10.0, double t2 = 1.0) {
  return make_molecule({offset}, {{0.0}}, t1, t2);
}

MoleculeSpec two_spins(double w1, double w2, double j) { return make_molecule({w1, w2}, {{0, j}, {j, 0}}); }

PulseSequence constant_pulse(double amp, double phase, double duration, std::size_t n) {
  return PulseSequence{duration / static_cast<double>(n), std::vector<PulseSegment>(n, PulseSegment{amp, phase})};
}

TEST(Drift, OnResonanceSpinIsZero) { EXPECT_LE(max_abs(drift_hamiltonian(one_spin())), 0.0); }

TEST(Drift, CouplingConvention) {
  const ComplexMatrix h = drift_hamiltonian(two_spins(0, 0, 100.0));
  const double unit = kPi * kHbarPeVs * 100.0 / 2.0;
  ComplexMatrix expected = ComplexMatrix::Zero(4, 4);
  expected.diagonal() << unit, -unit, -unit, unit;
  EXPECT_LE(max_abs(h - expected), 1e-15);
}

TEST(Drift, FourSpinsMatchBitstringSum) {
  const MoleculeSpec m = synthetic_molecule();
  const ComplexMatrix h = drift_hamiltonian(m);
  for (std::size_t i = 0; i < 16; ++i) {
    double e = 0.0;
    auto z = [&](std::size_t k) { return ((i >> (3 - k)) & 1U) ? -1.0 : 1.0; };
    for (std::size_t k = 0; k < 4; ++k) e += m.frequencies[k] * z(k) / 2.0;
    for (std::size_t k = 0; k < 4; ++k)
      for (std::size_t n = 0; n < 4; ++n)
        if (k != n) e += kPi * m.couplings[k][n] * z(k) * z(n) / 4.0;
    EXPECT_NEAR(h(i, i).real(), kHbarPeVs * e, 1e-12 * kHbarPeVs * std::abs(e) + 1e-18);
  }
  EXPECT_LE(max_abs(h - ComplexMatrix(h.diagonal().asDiagonal())), 0.0);
}

TEST(Drift, CommutesWithEverySigmaZ) {
  const MoleculeSpec m = synthetic_molecule();
  const ComplexMatrix h = drift_hamiltonian(m);
  const ComplexMatrix u = free_evolution(m, 0.0123).matrix();
  for (std::size_t k = 0; k < 4; ++k) {
    const ComplexMatrix z = embed(pauli_z(), {k}, 4);
    EXPECT_LE(max_abs(h * z - z * h), 1e-15);
    EXPECT_LE(max_abs(u * z - z * u), 1e-14);
  }
}

TEST(Drift, AbsoluteFrequenciesUseRotatingFrame) {
  MoleculeSpec m = two_spins(1000.0, 3000.0, 0.0);
  m.form = FrequencyForm::kAbsolute;
  m.rotating_frame = default_rotating_frame(m.frequencies);
  EXPECT_DOUBLE_EQ(m.rotating_frame, 2000.0);
  EXPECT_DOUBLE_EQ(m.offset(0), -1000.0);
  EXPECT_DOUBLE_EQ(m.offset(1), 1000.0);
}

TEST(Control, ZeroAmplitude) { EXPECT_LE(max_abs(control_hamiltonian(synthetic_molecule(), 0.0, 1.3)), 0.0); }

TEST(Control, PhaseZeroIsSigmaX) {
  const double amp = 2 * kPi * 1000;
  EXPECT_LE(max_abs(control_hamiltonian(one_spin(), amp, 0.0) - kHbarPeVs * amp * pauli_x() / 2.0), 1e-15);
}

TEST(Control, QuarterPhaseTwoSpins) {
  const double amp = 2 * kPi * 700;
  const ComplexMatrix expected =
      kHbarPeVs * amp * (kron(pauli_y(), identity(2)) + kron(identity(2), pauli_y())) / 2.0;
  EXPECT_LE(max_abs(control_hamiltonian(two_spins(0, 0, 10), amp, kPi / 2) - expected), 1e-15);
}

TEST(Control, NegativeAmplitudeThrows) { EXPECT_THROW(control_hamiltonian(one_spin(), -1.0, 0.0), std::invalid_argument); }

TEST(FreeEvolution, ZeroTimeIsIdentity) {
  EXPECT_LE(max_abs(free_evolution(synthetic_molecule(), 0.0).matrix() - identity(16)), 0.0);
}

TEST(FreeEvolution, ConditionalPhaseAtHalfInverseCoupling) {
  const double j = 100.0;
  const ComplexMatrix u = free_evolution(two_spins(0, 0, j), 1.0 / (2 * j)).matrix();
  // The doublet phase of one spin differs by pi depending on the other spin.
  const Complex conditional = u(0, 0) * u(3, 3) / (u(1, 1) * u(2, 2));
  EXPECT_NEAR(conditional.real(), -1.0, 1e-12);
  EXPECT_NEAR(conditional.imag(), 0.0, 1e-12);
}

TEST(FreeEvolution, UnitModulusDiagonal) {
  const ComplexMatrix u = free_evolution(synthetic_molecule(), 3.7).matrix();
  for (Eigen::Index i = 0; i < u.rows(); ++i) EXPECT_NEAR(std::abs(u(i, i)), 1.0, 1e-14);
}

TEST(FreeEvolution, NegativeTimeThrows) {
  EXPECT_THROW(free_evolution(synthetic_molecule(), -1e-3), std::invalid_argument);
}

TEST(Propagate, NothingHappensWithoutFields) {
  std::mt19937_64 rng(2);
  const auto rho = szilard::testing::random_density(4, rng);
  const auto out = propagate(rho, two_spins(0, 0, 0), constant_pulse(0, 0, 0.01, 10), Relaxation::kOff);
  EXPECT_LE(max_abs(out.matrix() - rho.matrix()), 1e-14);
}

TEST(Propagate, ConstantFieldIsRotation) {
  const double amp = 2 * kPi * 1000;
  const double t = (kPi / 2) / amp;
  std::mt19937_64 rng(4);
  const auto rho = szilard::testing::random_density(2, rng);
  const auto out = propagate(rho, one_spin(), constant_pulse(amp, 0.0, t, 7), Relaxation::kOff);
  const ComplexMatrix rx = std::cos(kPi / 4) * identity(2) - Complex(0, std::sin(kPi / 4)) * pauli_x();
  EXPECT_LE(max_abs(out.matrix() - rx * rho.matrix() * rx.adjoint()), 1e-12);
}

TEST(Propagate, LongRelaxationReachesGround) {
  const auto out = propagate(DensityMatrix::maximally_mixed(2), one_spin(0, 0.01, 0.01), constant_pulse(0, 0, 1.0, 100),
                             Relaxation::kOn);
  EXPECT_LE(max_abs(out.matrix() - basis_projector(2, 0)), 1e-12);
}

TEST(Propagate, UnitaryEvolutionKeepsSpectrum) {
  std::mt19937_64 rng(6);
  const auto rho = szilard::testing::random_density(16, rng);
  PulseSequence p{1e-4, {}};
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 20; ++i) p.segments.push_back({2 * kPi * 3000 * u(rng), 2 * kPi * u(rng)});
  const auto out = propagate(rho, synthetic_molecule(), p, Relaxation::kOff);
  RealVector a = rho.eigenvalues(), b = out.eigenvalues();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Propagate, RelaxationIsTracePreservingAndContractive) {
  std::mt19937_64 rng(9);
  const MoleculeSpec m = make_molecule({0, 0}, {{0, 0}, {0, 0}}, 0.05, 0.02);
  const auto a = szilard::testing::random_density(4, rng);
  const auto b = szilard::testing::random_density(4, rng);
  double distance = trace_distance(a, b);
  ComplexMatrix ra = a.matrix(), rb = b.matrix();
  for (int step = 0; step < 30; ++step) {
    relax_in_place(ra, m, 2e-3);
    relax_in_place(rb, m, 2e-3);
    EXPECT_NEAR(ra.trace().real(), 1.0, 1e-10);
    EXPECT_NEAR(ra.trace().imag(), 0.0, 1e-12);
    const DensityMatrix da(ra), db(rb);
    const double d = trace_distance(da, db);
    EXPECT_LE(d, distance + 1e-12);
    distance = d;
  }
}

TEST(Propagate, DephasingLowersPurity) {
  std::mt19937_64 rng(10);
  // T1 so long that only dephasing acts.
  const MoleculeSpec m = make_molecule({0, 0}, {{0, 0}, {0, 0}}, 1e12, 0.02);
  const auto rho = szilard::testing::random_density(4, rng);
  double purity = rho.purity();
  ComplexMatrix r = rho.matrix();
  for (int step = 0; step < 30; ++step) {
    relax_in_place(r, m, 2e-3);
    const double p = DensityMatrix(r).purity();
    EXPECT_LE(p, purity + 1e-12);
    purity = p;
  }
}

TEST(Propagate, SingleSpinDecayRates) {
  const double t1 = 0.5, t2 = 0.2, t = 0.1;
  ComplexMatrix r = ComplexMatrix::Constant(2, 2, 0.5);  // |+><+|
  relax_in_place(r, one_spin(0, t1, t2), t);
  EXPECT_NEAR(r(0, 1).real(), 0.5 * std::exp(-t / t2), 1e-14);
  EXPECT_NEAR(r(1, 1).real(), 0.5 * std::exp(-t / t1), 1e-14);
}

TEST(Propagate, SplittingConstantSegmentsIsExact) {
  const MoleculeSpec m = synthetic_molecule();
  std::mt19937_64 rng(12);
  const auto rho = szilard::testing::random_density(16, rng);
  const auto one = propagate(rho, m, constant_pulse(2 * kPi * 2000, 0.4, 1e-3, 1), Relaxation::kOff);
  for (std::size_t k : {2, 5, 16}) {
    const auto split = propagate(rho, m, constant_pulse(2 * kPi * 2000, 0.4, 1e-3, k), Relaxation::kOff);
    EXPECT_LE(max_abs(split.matrix() - one.matrix()), 1e-9) << k << " segments";
  }
}

TEST(Propagate, TrotterErrorIsSecondOrder) {
  const MoleculeSpec m = two_spins(2 * kPi * -500, 2 * kPi * 800, 50.0);
  const double duration = 2e-3;
  auto sampled = [&](std::size_t n) {
    PulseSequence p{duration / static_cast<double>(n), {}};
    for (std::size_t i = 0; i < n; ++i) {
      const double t = (static_cast<double>(i) + 0.5) * p.segment_duration;
      p.segments.push_back({2 * kPi * 1500 * (1 + 0.5 * std::sin(2 * kPi * t / duration)), kPi * t / duration});
    }
    return p;
  };
  const auto rho = DensityMatrix::basis_state(4, 0);
  const auto reference = propagate(rho, m, sampled(4096), Relaxation::kOff);
  const double coarse = max_abs(propagate(rho, m, sampled(32), Relaxation::kOff).matrix() - reference.matrix());
  const double fine = max_abs(propagate(rho, m, sampled(64), Relaxation::kOff).matrix() - reference.matrix());
  EXPECT_GE(std::log2(coarse / fine), 1.8);
}

TEST(Propagate, DimensionMismatchThrows) {
  EXPECT_THROW(propagate(DensityMatrix::maximally_mixed(2), synthetic_molecule(), constant_pulse(0, 0, 1e-3, 1),
                         Relaxation::kOff),
               std::invalid_argument);
}

TEST(Molecule, ValidationCatchesBadTables) {
  MoleculeSpec m = two_spins(0, 0, 10);
  m.couplings[0][1] = 11;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m = two_spins(0, 0, 10);
  m.t2 = {3.0, 1.0};
  m.t1 = {1.0, 1.0};
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m = two_spins(0, 0, 10);
  m.n_spins = 0;
  EXPECT_THROW(m.validate(), std::invalid_argument);
}

TEST(MoleculeFile, ShippedSyntheticMatchesBuiltIn) {
  const MoleculeSpec m = load_molecule(SZILARD_SOURCE_DIR "/data/synthetic_4spin.mol");
  const MoleculeSpec s = synthetic_molecule();
  EXPECT_EQ(m.n_spins, s.n_spins);
  EXPECT_EQ(m.couplings, s.couplings);
  EXPECT_EQ(m.t1, s.t1);
  EXPECT_EQ(m.t2, s.t2);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(m.offset(k), s.offset(k), 1e-9);
}

TEST(MoleculeFile, TemplateIsRejectedUntilFilledIn) {
  try {
    load_molecule(SZILARD_SOURCE_DIR "/data/crotonic_template.mol");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_GT(e.line(), 0u);
  }
}

TEST(MoleculeFile, RoundTrip) {
  MoleculeSpec m = synthetic_molecule();
  m.form = FrequencyForm::kAbsolute;
  m.rotating_frame = 12345.5;
  std::ostringstream os;
  write_molecule(os, m);
  const MoleculeSpec back = parse_molecule(KeyValueFile::parse_string(os.str()));
  EXPECT_EQ(back.frequencies, m.frequencies);
  EXPECT_EQ(back.rotating_frame, m.rotating_frame);
  EXPECT_EQ(back.couplings, m.couplings);
  EXPECT_EQ(back.form, FrequencyForm::kAbsolute);
}

ConfigError parse_error(const std::string& text) {
  try {
    parse_molecule(KeyValueFile::parse_string(text));
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "no error for:\n" << text;
  return ConfigError("", 0, "");
}

TEST(MoleculeFile, ErrorsCarryLineNumbers) {
  const std::string head = "n_spins = 2\nfrequency_form = offset\nfrequencies = 0, 100\n";
  auto e = parse_error(head + "couplings = 0, 5, 6, 0\n");
  EXPECT_EQ(e.field(), "couplings");
  EXPECT_EQ(e.line(), 4u);
  e = parse_error(head + "couplings = 5\nt1 = -1\n");
  EXPECT_EQ(e.field(), "t1");
  EXPECT_EQ(e.line(), 5u);
  e = parse_error(head + "couplings = 5\nt1 = 1\nt2 = 3\n");
  EXPECT_EQ(e.field(), "t2");
  e = parse_error(head + "couplings = 5\nspin_label = C1\n");
  EXPECT_EQ(e.field(), "spin_label");
  EXPECT_EQ(e.line(), 5u);
  e = parse_error("n_spins = 2\nfrequencies = 0, 100\ncouplings = 5\n");
  EXPECT_EQ(e.field(), "frequency_form");
  e = parse_error("n_spins = 2\nfrequency_form = offset\nfrequencies = 0, 100\nrotating_frame = 3\ncouplings = 5\n");
  EXPECT_EQ(e.field(), "rotating_frame");
}

TEST(PulseFile, RoundTripIsBitExact) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(0, 1);
  PulseSequence p{1.7e-4, {}};
  for (int i = 0; i < 50; ++i) p.segments.push_back({2 * kPi * 2500 * u(rng), 2 * kPi * u(rng) - kPi});
  EXPECT_EQ(pulse_from_string(pulse_to_string(p)), p);
  EXPECT_NEAR(p.total_duration(), 50 * 1.7e-4, 1e-15);
}

TEST(PulseFile, RejectsMalformedInput) {
  EXPECT_THROW(pulse_from_string("segments = 1\n1 0\n"), ConfigError);
  EXPECT_THROW(pulse_from_string("segment_duration = -1\n"), ConfigError);
  EXPECT_THROW(pulse_from_string("segment_duration = 1e-4\nsegments = 2\n1 0\n"), ConfigError);
  try {
    pulse_from_string("segment_duration = 1e-4\n1 0\n-1 0\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

}  // namespace
}  // namespace szilard::nmr
