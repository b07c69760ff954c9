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

// Four-qubit Szilard engine: weight (W), particle (P), demon memory (M) and
// ancilla (A). One cycle is thermalization of P, a CNOT measurement into M,
// two controlled feedback gates that move the extracted energy into W, and
// a swap of M with A that resets the memory.
//
// Energy convention: basis bit 0 is the ground level (-hbar*omega), bit 1 the
// excited level (+hbar*omega). Temperatures are always k_B*T in peV.

#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "szilard/nmr.hpp"
#include "szilard/qcore.hpp"

namespace szilard::engine {

enum class Role : std::size_t { kW = 0, kP = 1, kM = 2, kA = 3 };
inline constexpr std::size_t kRegisterSize = 4;
inline constexpr std::array<Role, kRegisterSize> kRoles = {Role::kW, Role::kP, Role::kM, Role::kA};

constexpr std::size_t index(Role r) { return static_cast<std::size_t>(r); }

inline const char* role_name(Role r) {
  switch (r) {
    case Role::kW: return "W";
    case Role::kP: return "P";
    case Role::kM: return "M";
    case Role::kA: return "A";
  }
  return "?";
}

enum class Level { kGround = 0, kExcited = 1 };

struct EngineParams {
  static constexpr double hbar = kHbarPeVs;
  double omega = 2000.0;  // rad/s
  double kT = 0.0;        // peV

  double hbar_omega() const { return hbar * omega; }
  /// Level spacing 2*hbar*omega.
  double gap() const { return 2.0 * hbar * omega; }

  void validate() const {
    if (!(omega > 0.0) || !std::isfinite(omega)) throw std::invalid_argument("EngineParams: omega must be positive");
    if (!(kT >= 0.0) || std::isnan(kT)) throw std::invalid_argument("EngineParams: kT must be non-negative");
  }
};

/// Single-qubit energy operator diag(-hbar*omega, +hbar*omega).
inline ComplexMatrix qubit_hamiltonian(const EngineParams& p) {
  ComplexMatrix h = ComplexMatrix::Zero(2, 2);
  h(0, 0) = -p.hbar_omega();
  h(1, 1) = p.hbar_omega();
  return h;
}

/// Tr[rho_q H] for a single-qubit state.
inline double qubit_energy(const DensityMatrix& rho_q, const EngineParams& p) {
  if (rho_q.dim() != 2) throw std::invalid_argument("qubit_energy: expected a single-qubit state");
  return expectation(rho_q, qubit_hamiltonian(p));
}

// ---------------------------------------------------------------------------
// Thermal state.

/// Ground-level population of the Gibbs state for H = hbar*omega*sigma_z.
inline double ground_population(const EngineParams& p) {
  p.validate();
  if (p.kT == 0.0) return 1.0;
  return 1.0 / (1.0 + std::exp(-p.gap() / p.kT));
}

inline DensityMatrix thermal_state(const EngineParams& p) {
  const double pg = ground_population(p);
  ComplexMatrix m = ComplexMatrix::Zero(2, 2);
  m(0, 0) = pg;
  m(1, 1) = 1.0 - pg;
  return DensityMatrix(std::move(m));
}

/// Rotation angle such that Rx(alpha)|0> followed by dephasing gives the
/// Gibbs populations: alpha = 2*acos(sqrt(p_ground)).
inline double alpha_for_temperature(const EngineParams& p) {
  return 2.0 * std::acos(std::sqrt(ground_population(p)));
}

inline double erasure_cost_closed_form(const EngineParams& p) { return p.gap() * ground_population(p); }

// ---------------------------------------------------------------------------
// Gradient dephasing.

/// Zeroes (or scales by `residual`) every element whose coherence order over
/// `subset` is nonzero. residual = 0 is the ideal gradient.
inline DensityMatrix gz_dephase(const DensityMatrix& rho, std::span<const std::size_t> subset, double residual = 0.0) {
  const std::size_t n = rho.n_qubits();
  detail::check_qubit_list(subset, n, "gz_dephase");
  auto excitations = [&](std::size_t i) {
    int c = 0;
    for (std::size_t q : subset) c += static_cast<int>(detail::bit_of(i, q, n));
    return c;
  };
  ComplexMatrix m = rho.matrix();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (excitations(i) != excitations(j)) m(i, j) *= residual;
    }
  }
  return DensityMatrix(std::move(m));
}

inline DensityMatrix gz_dephase_all(const DensityMatrix& rho, double residual = 0.0) {
  std::vector<std::size_t> all(rho.n_qubits());
  for (std::size_t q = 0; q < all.size(); ++q) all[q] = q;
  return gz_dephase(rho, all, residual);
}

// ---------------------------------------------------------------------------
// Gates.

namespace gate {
struct Rx {
  double theta;
  std::size_t target;
};
struct Gz {
  std::vector<std::size_t> subset;
};
struct Cnot {
  std::size_t control;
  std::size_t target;
  Level activate_on;
};
struct Cswap {
  std::size_t control;
  std::size_t t1;
  std::size_t t2;
  Level activate_on;
};
/// Conditioned on the control: Rx(pi) on t2, then SWAP(t1, t2).
struct CrotSwap {
  std::size_t control;
  std::size_t t1;
  std::size_t t2;
  Level activate_on;
};
struct Swap {
  std::size_t t1;
  std::size_t t2;
};
}  // namespace gate

using GateSpec = std::variant<gate::Rx, gate::Gz, gate::Cnot, gate::Cswap, gate::CrotSwap, gate::Swap>;

/// Systematic control error on one gate: rotation angles scaled by
/// `amplitude_scale`, rotation axes turned by `phase_offset` about z.
struct GatePerturbation {
  double amplitude_scale = 1.0;
  double phase_offset = 0.0;
};

/// Dephasing channel standing in for a field-gradient pulse.
struct DephasingChannel {
  std::vector<std::size_t> subset;
  DensityMatrix apply(const DensityMatrix& rho, double residual = 0.0) const { return gz_dephase(rho, subset, residual); }
};

using BuiltGate = std::variant<UnitaryOp, DephasingChannel>;

namespace detail {

inline ComplexMatrix rotation_about_xy(double angle, double axis_phase) {
  const ComplexMatrix axis = std::cos(axis_phase) * pauli_x() + std::sin(axis_phase) * pauli_y();
  return expm_i(axis, angle / 2.0);
}

// Target operation X^s on one qubit (s = 1 is NOT), axis turned by phase.
inline ComplexMatrix not_power(const GatePerturbation& g) {
  const ComplexMatrix axis = std::cos(g.phase_offset) * pauli_x() + std::sin(g.phase_offset) * pauli_y();
  const ComplexMatrix gen = (std::numbers::pi / 2.0) * (identity(2) - axis);
  return expm_i(gen, g.amplitude_scale);
}

inline ComplexMatrix swap_power(double s) {
  const ComplexMatrix gen = (std::numbers::pi / 2.0) * (identity(4) - swap_matrix());
  return expm_i(gen, s);
}

// |v><v| (x) target + |!v><!v| (x) I, control as the most significant qubit.
inline ComplexMatrix controlled(const ComplexMatrix& target, Level activate_on) {
  const std::size_t d = static_cast<std::size_t>(target.rows());
  const std::size_t on = static_cast<std::size_t>(activate_on);
  return kron(basis_projector(2, on), target) + kron(basis_projector(2, 1 - on), identity(d));
}

inline void check_distinct(std::initializer_list<std::size_t> qs, std::size_t n) {
  std::vector<std::size_t> v(qs);
  try {
    szilard::detail::check_qubit_list(v, n, "build_gate");
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument("build_gate: control and target qubits must be distinct and in range");
  }
}

}  // namespace detail

/// Builds the register-level operator for a gate. Gz is the only channel.
inline BuiltGate build_gate(const GateSpec& spec, std::size_t n = kRegisterSize, const GatePerturbation& pert = {}) {
  return std::visit(
      [&](const auto& g) -> BuiltGate {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, gate::Rx>) {
          detail::check_distinct({g.target}, n);
          return UnitaryOp(
              embed(detail::rotation_about_xy(g.theta * pert.amplitude_scale, pert.phase_offset), {g.target}, n));
        } else if constexpr (std::is_same_v<T, gate::Gz>) {
          szilard::detail::check_qubit_list(g.subset, n, "build_gate");
          return DephasingChannel{g.subset};
        } else if constexpr (std::is_same_v<T, gate::Cnot>) {
          detail::check_distinct({g.control, g.target}, n);
          return UnitaryOp(embed(detail::controlled(detail::not_power(pert), g.activate_on), {g.control, g.target}, n));
        } else if constexpr (std::is_same_v<T, gate::Cswap>) {
          detail::check_distinct({g.control, g.t1, g.t2}, n);
          return UnitaryOp(embed(detail::controlled(detail::swap_power(pert.amplitude_scale), g.activate_on),
                                 {g.control, g.t1, g.t2}, n));
        } else if constexpr (std::is_same_v<T, gate::CrotSwap>) {
          detail::check_distinct({g.control, g.t1, g.t2}, n);
          const ComplexMatrix rot =
              kron(identity(2), detail::rotation_about_xy(std::numbers::pi * pert.amplitude_scale, pert.phase_offset));
          const ComplexMatrix body = detail::swap_power(pert.amplitude_scale) * rot;
          return UnitaryOp(embed(detail::controlled(body, g.activate_on), {g.control, g.t1, g.t2}, n));
        } else {
          detail::check_distinct({g.t1, g.t2}, n);
          return UnitaryOp(embed(detail::swap_power(pert.amplitude_scale), {g.t1, g.t2}, n));
        }
      },
      spec);
}

inline UnitaryOp build_unitary(const GateSpec& spec, std::size_t n = kRegisterSize, const GatePerturbation& pert = {}) {
  auto built = build_gate(spec, n, pert);
  if (const auto* u = std::get_if<UnitaryOp>(&built)) return *u;
  throw std::invalid_argument("build_unitary: gate is a channel");
}

// ---------------------------------------------------------------------------
// Cycle description.

enum class Variant { kA, kB, kC, kD };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kA: return "a";
    case Variant::kB: return "b";
    case Variant::kC: return "c";
    case Variant::kD: return "d";
  }
  return "?";
}

inline std::optional<Variant> parse_variant(std::string_view s) {
  if (s == "a") return Variant::kA;
  if (s == "b") return Variant::kB;
  if (s == "c") return Variant::kC;
  if (s == "d") return Variant::kD;
  return std::nullopt;
}

struct CycleConfig {
  Variant variant = Variant::kA;
  std::array<Level, kRegisterSize> initial{};
  bool thermalize = true;

  /// a-c: W, P ground; M, A excited; thermalization on. d: all excited, no
  /// thermalization.
  static CycleConfig for_variant(Variant v) {
    CycleConfig c;
    c.variant = v;
    if (v == Variant::kD) {
      c.initial = {Level::kExcited, Level::kExcited, Level::kExcited, Level::kExcited};
      c.thermalize = false;
    } else {
      c.initial = {Level::kGround, Level::kGround, Level::kExcited, Level::kExcited};
      c.thermalize = true;
    }
    return c;
  }

  DensityMatrix initial_state() const {
    std::size_t idx = 0;
    for (Level l : initial) idx = (idx << 1) | static_cast<std::size_t>(l);
    return DensityMatrix::basis_state(std::size_t{1} << kRegisterSize, idx);
  }
};

enum class Step { kInit = 0, kThermalization, kMeasurement, kFeedback, kErasure };
inline constexpr std::array<Step, 5> kSteps = {Step::kInit, Step::kThermalization, Step::kMeasurement, Step::kFeedback,
                                               Step::kErasure};

inline const char* step_name(Step s) {
  switch (s) {
    case Step::kInit: return "init";
    case Step::kThermalization: return "thermalization";
    case Step::kMeasurement: return "measurement";
    case Step::kFeedback: return "feedback";
    case Step::kErasure: return "erasure";
  }
  return "?";
}

struct CircuitGate {
  std::string label;
  GateSpec spec;
};

struct CircuitStep {
  Step step;
  std::vector<CircuitGate> gates;
};

// Labels of the compiled gates (the Gz channel is never compiled).
inline const std::string kThermalizeRx = "thermalize_rx";
inline const std::string kThermalizeGz = "thermalize_gz";
inline const std::string kMeasureCnot = "measure_cnot";
inline const std::string kFeedbackCswap = "feedback_cswap";
inline const std::string kFeedbackCrotSwap = "feedback_crot_swap";
inline const std::string kEraseSwap = "erase_swap";

/// The four steps after initialization. Thermalization is empty when the
/// configuration skips it.
inline std::vector<CircuitStep> engine_circuit(const CycleConfig& config, const EngineParams& params) {
  const std::size_t w = index(Role::kW), p = index(Role::kP), m = index(Role::kM), a = index(Role::kA);
  std::vector<CircuitStep> steps;
  CircuitStep therm{Step::kThermalization, {}};
  if (config.thermalize) {
    therm.gates.push_back({kThermalizeRx, gate::Rx{alpha_for_temperature(params), p}});
    therm.gates.push_back({kThermalizeGz, gate::Gz{{w, p, m, a}}});
  }
  steps.push_back(std::move(therm));
  steps.push_back({Step::kMeasurement, {{kMeasureCnot, gate::Cnot{p, m, Level::kGround}}}});
  steps.push_back({Step::kFeedback,
                   {{kFeedbackCswap, gate::Cswap{m, w, p, Level::kExcited}},
                    {kFeedbackCrotSwap, gate::CrotSwap{m, w, p, Level::kGround}}}});
  steps.push_back({Step::kErasure, {{kEraseSwap, gate::Swap{m, a}}}});
  return steps;
}

// ---------------------------------------------------------------------------
// Ledger.

struct StepRecord {
  Step step;
  DensityMatrix state;
  std::array<double, kRegisterSize> energy{};   // peV
  std::array<double, kRegisterSize> entropy{};  // nats

  double energy_of(Role r) const { return energy[index(r)]; }
  double entropy_of(Role r) const { return entropy[index(r)]; }
  DensityMatrix reduced(Role r) const { return reduced_qubit(state, index(r)); }
};

struct CycleLedger {
  EngineParams params;
  CycleConfig config;
  std::vector<StepRecord> steps;  // one per Step, in order

  const StepRecord& at(Step s) const { return steps.at(static_cast<std::size_t>(s)); }
  double energy(Step s, Role r) const { return at(s).energy_of(r); }

  /// Energy taken up by P from the reservoir.
  double heat_extracted() const { return energy(Step::kThermalization, Role::kP) - energy(Step::kInit, Role::kP); }
  double weight_work_gain() const { return energy(Step::kFeedback, Role::kW) - energy(Step::kMeasurement, Role::kW); }
  double measurement_memory_drop() const {
    return energy(Step::kThermalization, Role::kM) - energy(Step::kMeasurement, Role::kM);
  }
  double erasure_cost() const { return energy(Step::kErasure, Role::kM) - energy(Step::kFeedback, Role::kM); }
  double entropy_variation_weight_nats() const {
    return at(Step::kFeedback).entropy_of(Role::kW) - at(Step::kMeasurement).entropy_of(Role::kW);
  }
  /// kT * dS in peV.
  double entropy_variation_weight_feedback() const { return params.kT * entropy_variation_weight_nats(); }
};

inline StepRecord make_record(Step step, const DensityMatrix& state, const EngineParams& params) {
  StepRecord r{step, state, {}, {}};
  for (Role role : kRoles) {
    const DensityMatrix q = reduced_qubit(state, index(role));
    r.energy[index(role)] = qubit_energy(q, params);
    r.entropy[index(role)] = von_neumann_entropy(q);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Backends.

struct IdealBackend {};

/// One pulse per compiled gate label, run on a spin system.
struct CompiledCycle {
  std::map<std::string, nmr::PulseSequence> pulses;
  std::map<std::string, double> gate_fidelity;

  double total_duration() const {
    double t = 0.0;
    for (const auto& [label, p] : pulses) t += p.total_duration();
    return t;
  }
};

struct PulseBackend {
  const nmr::SpinSystem* system = nullptr;
  const CompiledCycle* compiled = nullptr;
  nmr::Relaxation relaxation = nmr::Relaxation::kOff;
};

using Backend = std::variant<IdealBackend, PulseBackend>;

/// Noise realization for one cycle run: per-gate control errors keyed by
/// label, plus the residual coherence left by imperfect gradients.
struct CyclePerturbation {
  std::map<std::string, GatePerturbation> gates;
  double gz_residual = 0.0;

  GatePerturbation for_gate(const std::string& label) const {
    const auto it = gates.find(label);
    return it == gates.end() ? GatePerturbation{} : it->second;
  }
};

inline nmr::PulseSequence perturb_pulse(const nmr::PulseSequence& p, const GatePerturbation& g) {
  nmr::PulseSequence out = p;
  for (auto& s : out.segments) {
    s.amplitude *= g.amplitude_scale;
    s.phase += g.phase_offset;
    if (s.amplitude < 0.0) {
      s.amplitude = -s.amplitude;
      s.phase += std::numbers::pi;
    }
  }
  return out;
}

/// Runs one cycle and records every subsystem after every step.
inline CycleLedger run_cycle(const CycleConfig& config, const EngineParams& params, const Backend& backend = IdealBackend{},
                             const CyclePerturbation& perturbation = {}) {
  params.validate();
  const auto circuit = engine_circuit(config, params);

  if (const auto* pb = std::get_if<PulseBackend>(&backend)) {
    if (pb->system == nullptr || pb->compiled == nullptr) {
      throw std::invalid_argument("run_cycle: pulse backend requires a spin system and compiled pulses");
    }
    if (pb->system->molecule().n_spins != kRegisterSize) {
      throw std::invalid_argument("run_cycle: pulse backend needs a 4-spin molecule");
    }
    for (const auto& step : circuit) {
      for (const auto& g : step.gates) {
        if (std::holds_alternative<gate::Gz>(g.spec)) continue;
        if (!pb->compiled->pulses.contains(g.label)) {
          throw std::invalid_argument("run_cycle: no compiled pulse for gate '" + g.label + "'");
        }
      }
    }
  }

  CycleLedger ledger{params, config, {}};
  DensityMatrix rho = config.initial_state();
  ledger.steps.push_back(make_record(Step::kInit, rho, params));

  for (const auto& step : circuit) {
    for (const auto& g : step.gates) {
      const GatePerturbation pert = perturbation.for_gate(g.label);
      if (const auto* gz = std::get_if<gate::Gz>(&g.spec)) {
        rho = gz_dephase(rho, gz->subset, perturbation.gz_residual);
        continue;
      }
      if (const auto* pb = std::get_if<PulseBackend>(&backend)) {
        const auto& pulse = pb->compiled->pulses.at(g.label);
        rho = nmr::propagate(rho, *pb->system, perturb_pulse(pulse, pert), pb->relaxation);
      } else {
        rho = apply_unitary(rho, build_unitary(g.spec, kRegisterSize, pert));
      }
    }
    ledger.steps.push_back(make_record(step.step, rho, params));
  }
  return ledger;
}

// ---------------------------------------------------------------------------
// Closed-form theory.

using EnergyTable = std::array<std::array<double, kRegisterSize>, kSteps.size()>;

/// Closed-form energies for variants a-c, with x = hbar*omega/kT.
inline EnergyTable theoretical_energy_trace(const CycleConfig& config, const EngineParams& params) {
  if (config.variant == Variant::kD) {
    throw std::invalid_argument("theoretical_energy_trace: variant d has a constant trace");
  }
  params.validate();
  const double e = params.hbar_omega();
  const double tanh_x = params.kT == 0.0 ? 1.0 : std::tanh(e / params.kT);
  const std::size_t w = index(Role::kW), p = index(Role::kP), m = index(Role::kM), a = index(Role::kA);

  EnergyTable t{};
  auto& init = t[static_cast<std::size_t>(Step::kInit)];
  init[w] = -e;
  init[p] = -e;
  init[m] = e;
  init[a] = e;

  auto therm = init;
  therm[p] = -e * tanh_x;
  auto meas = therm;
  meas[m] = -e * tanh_x;
  auto feed = meas;
  feed[w] = e;
  feed[p] = -e;
  auto erase = feed;
  erase[m] = e;
  erase[a] = -e * tanh_x;

  t[static_cast<std::size_t>(Step::kThermalization)] = therm;
  t[static_cast<std::size_t>(Step::kMeasurement)] = meas;
  t[static_cast<std::size_t>(Step::kFeedback)] = feed;
  t[static_cast<std::size_t>(Step::kErasure)] = erase;
  return t;
}

/// Theory for any variant: the closed-form trace for a-c, the constant
/// initial energies for d.
inline EnergyTable theory_table(const CycleConfig& config, const EngineParams& params) {
  if (config.variant != Variant::kD) return theoretical_energy_trace(config, params);
  EnergyTable t{};
  for (auto& row : t) {
    for (Role r : kRoles) {
      row[index(r)] = config.initial[index(r)] == Level::kExcited ? params.hbar_omega() : -params.hbar_omega();
    }
  }
  return t;
}

}  // namespace szilard::engine
