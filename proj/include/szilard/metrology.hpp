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

// Single-qubit state tomography from Pauli magnetizations, per-qubit energy
// read-out, and Monte Carlo error bars for the cycle's energy table.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "szilard/engine.hpp"
#include "szilard/qcore.hpp"

namespace szilard::metrology {

/// Nearest valid state by eigenvalue clipping and renormalization.
/// Idempotent on valid states.
inline DensityMatrix project_to_state(const ComplexMatrix& h) {
  if (h.rows() != h.cols()) throw std::invalid_argument("project_to_state: matrix must be square");
  const ComplexMatrix sym = 0.5 * (h + h.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(sym);
  RealVector l = es.eigenvalues().cwiseMax(0.0);
  const double total = l.sum();
  if (!(total > 0.0)) throw std::invalid_argument("project_to_state: no positive spectral weight");
  l /= total;
  ComplexMatrix out = es.eigenvectors() * l.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
  return DensityMatrix(0.5 * (out + out.adjoint()));
}

inline ComplexMatrix bloch_operator(const std::array<double, 3>& r) {
  return 0.5 * (identity(2) + r[0] * pauli_x() + r[1] * pauli_y() + r[2] * pauli_z());
}

struct TomographyResult {
  std::size_t qubit = 0;
  std::array<double, 3> bloch{};      // after projection to the Bloch ball
  std::array<double, 3> raw_bloch{};  // as measured
  DensityMatrix state = DensityMatrix::maximally_mixed(2);
  std::optional<std::uint64_t> shots;  // nullopt: exact expectation values
};

struct TomographySettings {
  std::optional<std::uint64_t> shots;
  // Additive Gaussian error on every measured magnetization.
  double readout_noise = 0.0;
};

inline std::array<double, 3> exact_bloch(const DensityMatrix& rho, std::size_t q) {
  const std::size_t n = rho.n_qubits();
  if (q >= n) throw std::invalid_argument("tomograph_qubit: qubit out of range");
  return {expectation(rho, embed(pauli_x(), {q}, n)), expectation(rho, embed(pauli_y(), {q}, n)),
          expectation(rho, embed(pauli_z(), {q}, n))};
}

inline TomographyResult tomograph_qubit(const DensityMatrix& rho, std::size_t q, const TomographySettings& settings,
                                        std::mt19937_64& rng) {
  if (settings.shots && *settings.shots == 0) throw std::invalid_argument("tomograph_qubit: shots must be positive");
  if (settings.readout_noise < 0.0) throw std::invalid_argument("tomograph_qubit: readout noise must be >= 0");
  TomographyResult out;
  out.qubit = q;
  out.shots = settings.shots;
  std::array<double, 3> r = exact_bloch(rho, q);
  if (settings.shots) {
    const auto n = *settings.shots;
    for (double& c : r) {
      const double p_plus = std::clamp(0.5 * (1.0 + c), 0.0, 1.0);
      std::binomial_distribution<std::uint64_t> bin(n, p_plus);
      c = 2.0 * static_cast<double>(bin(rng)) / static_cast<double>(n) - 1.0;
    }
  }
  if (settings.readout_noise > 0.0) {
    std::normal_distribution<double> noise(0.0, settings.readout_noise);
    for (double& c : r) c += noise(rng);
  }
  out.raw_bloch = r;
  out.state = project_to_state(bloch_operator(r));
  const auto& m = out.state.matrix();
  out.bloch = {2.0 * m(0, 1).real(), -2.0 * m(0, 1).imag(), (m(0, 0) - m(1, 1)).real()};
  return out;
}

inline TomographyResult tomograph_qubit(const DensityMatrix& rho, std::size_t q,
                                        std::optional<std::uint64_t> shots = std::nullopt, std::uint64_t seed = 0) {
  std::mt19937_64 rng(seed);
  return tomograph_qubit(rho, q, TomographySettings{shots, 0.0}, rng);
}

/// Mean energy of a single-qubit state, H = diag(-hbar*omega, +hbar*omega).
inline double energy_of(const DensityMatrix& rho_q, const engine::EngineParams& params) {
  return engine::qubit_energy(rho_q, params);
}

/// Energy read directly from the measured z magnetization.
inline double energy_from_magnetization(double r_z, const engine::EngineParams& params) {
  return -params.hbar_omega() * r_z;
}

// ---------------------------------------------------------------------------
// Monte Carlo error bars.

/// Error sources per realization: relative Gaussian jitter of every gate's
/// drive amplitude, Gaussian phase error (rad), residual coherence after the
/// gradient (|N(0, gradient_jitter)|, clipped to 1), and Gaussian read-out
/// error on each magnetization. `relaxation` switches T1/T2 on in pulse mode.
struct NoiseModel {
  double amplitude_jitter = 0.0;
  double phase_jitter = 0.0;
  double gradient_jitter = 0.0;
  double readout_noise = 0.0;
  bool relaxation = false;

  bool silent() const {
    return amplitude_jitter == 0.0 && phase_jitter == 0.0 && gradient_jitter == 0.0 && readout_noise == 0.0 &&
           !relaxation;
  }
};

/// Setting under which the energy error bars come out near 0.1 peV at
/// omega = 2000 rad/s.
inline NoiseModel calibrated_noise() {
  NoiseModel n;
  n.amplitude_jitter = 0.01;
  n.phase_jitter = 0.01;
  n.gradient_jitter = 0.01;
  n.readout_noise = 0.07;
  return n;
}

struct ErrorBarReport {
  std::string label;
  double mean = 0.0;  // peV
  double std = 0.0;   // peV
  std::size_t n_samples = 0;
  NoiseModel noise;
};

struct MonteCarloResult {
  // [step][role]
  std::array<std::array<ErrorBarReport, engine::kRegisterSize>, engine::kSteps.size()> energy;
  ErrorBarReport erasure_cost;
  ErrorBarReport weight_work_gain;
  ErrorBarReport measurement_memory_drop;
  ErrorBarReport entropy_variation_weight_feedback;  // kT * dS, peV
  ErrorBarReport entropy_variation_weight_nats;      // dS, nats

  double max_energy_std() const {
    double m = 0.0;
    for (const auto& row : energy) {
      for (const auto& e : row) m = std::max(m, e.std);
    }
    return m;
  }
  double min_energy_std() const {
    double m = INFINITY;
    for (const auto& row : energy) {
      for (const auto& e : row) m = std::min(m, e.std);
    }
    return m;
  }
};

namespace detail {

struct Accumulator {
  std::vector<double> values;
  ErrorBarReport finish(std::string label, const NoiseModel& noise) const {
    ErrorBarReport r;
    r.label = std::move(label);
    r.n_samples = values.size();
    r.noise = noise;
    double sum = 0.0;
    for (double v : values) sum += v;
    r.mean = values.empty() ? 0.0 : sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
    return r;
  }
};

inline std::mt19937_64 sample_rng(std::uint64_t seed, std::size_t sample) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(sample), static_cast<std::uint32_t>(sample >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Draws one noise realization for the circuit's gates.
inline engine::CyclePerturbation sample_perturbation(const engine::CycleConfig& config,
                                                     const engine::EngineParams& params, const NoiseModel& noise,
                                                     std::mt19937_64& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  engine::CyclePerturbation p;
  for (const auto& step : engine::engine_circuit(config, params)) {
    for (const auto& g : step.gates) {
      if (std::holds_alternative<engine::gate::Gz>(g.spec)) continue;
      engine::GatePerturbation gp;
      gp.amplitude_scale = 1.0 + noise.amplitude_jitter * unit(rng);
      gp.phase_offset = noise.phase_jitter * unit(rng);
      p.gates[g.label] = gp;
    }
  }
  p.gz_residual = std::min(1.0, std::abs(noise.gradient_jitter * unit(rng)));
  return p;
}

/// Reruns the cycle n_samples times with independent noise realizations and
/// reports mean and standard deviation of every measured energy and of the
/// derived ledger quantities. Sample k always uses the generator seeded by
/// (seed, k).
inline MonteCarloResult monte_carlo_errorbars(const engine::CycleConfig& config, const engine::EngineParams& params,
                                              const engine::Backend& backend, const NoiseModel& noise,
                                              std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 2) throw std::invalid_argument("monte_carlo_errorbars: need at least 2 samples");
  for (double v : {noise.amplitude_jitter, noise.phase_jitter, noise.gradient_jitter, noise.readout_noise}) {
    if (!(v >= 0.0)) throw std::invalid_argument("monte_carlo_errorbars: noise magnitudes must be >= 0");
  }

  engine::Backend run_backend = backend;
  if (auto* pb = std::get_if<engine::PulseBackend>(&run_backend); pb != nullptr && noise.relaxation) {
    pb->relaxation = nmr::Relaxation::kOn;
  }

  constexpr std::size_t kS = engine::kSteps.size();
  constexpr std::size_t kQ = engine::kRegisterSize;
  std::array<std::array<detail::Accumulator, kQ>, kS> energy;
  detail::Accumulator erasure, gain, drop, ds_energy, ds_nats;

  for (std::size_t k = 0; k < n_samples; ++k) {
    auto rng = detail::sample_rng(seed, k);
    const auto pert = sample_perturbation(config, params, noise, rng);
    const auto ledger = engine::run_cycle(config, params, run_backend, pert);

    std::array<std::array<double, kQ>, kS> e{};
    std::array<std::array<double, kQ>, kS> s{};
    for (std::size_t st = 0; st < kS; ++st) {
      for (std::size_t q = 0; q < kQ; ++q) {
        const auto tomo = tomograph_qubit(ledger.steps[st].state, q, TomographySettings{std::nullopt, noise.readout_noise}, rng);
        e[st][q] = energy_from_magnetization(tomo.raw_bloch[2], params);
        s[st][q] = von_neumann_entropy(tomo.state);
        energy[st][q].values.push_back(e[st][q]);
      }
    }
    using engine::Role;
    using engine::Step;
    auto at = [&](Step st, Role r) { return e[static_cast<std::size_t>(st)][engine::index(r)]; };
    erasure.values.push_back(at(Step::kErasure, Role::kM) - at(Step::kFeedback, Role::kM));
    gain.values.push_back(at(Step::kFeedback, Role::kW) - at(Step::kMeasurement, Role::kW));
    drop.values.push_back(at(Step::kThermalization, Role::kM) - at(Step::kMeasurement, Role::kM));
    const double dsn = s[static_cast<std::size_t>(Step::kFeedback)][engine::index(Role::kW)] -
                       s[static_cast<std::size_t>(Step::kMeasurement)][engine::index(Role::kW)];
    ds_nats.values.push_back(dsn);
    ds_energy.values.push_back(params.kT * dsn);
  }

  MonteCarloResult out;
  for (std::size_t st = 0; st < kS; ++st) {
    for (std::size_t q = 0; q < kQ; ++q) {
      out.energy[st][q] = energy[st][q].finish(std::string("energy.") + engine::step_name(engine::kSteps[st]) + "." +
                                                   engine::role_name(engine::kRoles[q]),
                                               noise);
    }
  }
  out.erasure_cost = erasure.finish("erasure_cost", noise);
  out.weight_work_gain = gain.finish("weight_work_gain", noise);
  out.measurement_memory_drop = drop.finish("measurement_memory_drop", noise);
  out.entropy_variation_weight_feedback = ds_energy.finish("entropy_variation_weight_feedback", noise);
  out.entropy_variation_weight_nats = ds_nats.finish("entropy_variation_weight_nats", noise);
  return out;
}

}  // namespace szilard::metrology
