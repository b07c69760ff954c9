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

// Acceptance run: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <random>
#include <string>

#include "szilard/experiment.hpp"

using namespace szilard;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kTemps[] = {1.33, 2.51, 10.91};
constexpr double kQuoted[] = {2.3, 1.9, 1.5};

int failures = 0;

void verdict(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("%s %2d %-24s %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

engine::EngineParams at(double kT) {
  engine::EngineParams p;
  p.kT = kT;
  return p;
}

std::vector<double> random_temperatures(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.1, 100.0);
  std::vector<double> out(50);
  for (auto& t : out) t = u(rng);
  return out;
}

void erasure_energies() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < 3; ++i) {
    app::ExperimentConfig c;
    c.kT = kTemps[i];
    const auto r = app::run_experiment(c);
    const double closed = 2.0 * at(kTemps[i]).hbar_omega() / (1.0 + std::exp(-at(kTemps[i]).gap() / kTemps[i]));
    ok = ok && std::abs(r.ledger.erasure_cost - closed) < 1e-6 && std::abs(r.ledger.erasure_cost - kQuoted[i]) <= 0.1;
    detail += fmt("kT=%.2f: ", kTemps[i]) + fmt("%.6f ", r.ledger.erasure_cost) + fmt("(closed %.6f, ", closed) +
              fmt("quoted %.1f)  ", kQuoted[i]);
  }
  const double t = seconds_since(t0);
  ok = ok && t < 1.0;
  verdict(1, "erasure energies", ok, detail + fmt("runtime %.3f s", t));
}

void weight_gain() {
  app::ExperimentConfig c;
  const auto r = app::run_experiment(c);
  const double expected = c.params().gap();
  const bool ok = std::abs(r.ledger.weight_work_gain - expected) < 1e-9 && std::abs(r.ledger.weight_work_gain - 2.5) <= 0.2;
  verdict(2, "weight work gain", ok,
          fmt("simulated %.6f peV", r.ledger.weight_work_gain) + fmt(" vs measured ~2.5 peV (2*hbar*omega = %.6f)", expected));
}

void weight_entropy() {
  bool ok = true;
  std::string detail;
  const auto cycle = engine::CycleConfig::for_variant(engine::Variant::kA);
  for (double kT : kTemps) {
    const auto l = engine::run_cycle(cycle, at(kT));
    const auto mc =
        metrology::monte_carlo_errorbars(cycle, at(kT), engine::IdealBackend{}, metrology::calibrated_noise(), 400, 1);
    const double ds = l.entropy_variation_weight_nats();
    const double kt_ds = mc.entropy_variation_weight_feedback.mean;
    ok = ok && std::abs(ds) < 1e-9 && std::abs(kt_ds) <= 0.2;
    detail += fmt("kT=%.2f: ", kT) + fmt("dS %.1e nats, ", ds) + fmt("MC kT*dS %+.3f", kt_ds) +
              fmt(" +- %.3f peV  ", mc.entropy_variation_weight_feedback.std);
  }
  verdict(3, "weight entropy", ok, detail);
}

// Largest energy change of any subsystem across the five ledger points.
double isolation_drift(const engine::CycleLedger& l) {
  double drift = 0.0;
  for (const auto& s : l.steps)
    for (std::size_t q = 0; q < engine::kRegisterSize; ++q) drift = std::max(drift, std::abs(s.energy[q] - l.steps[0].energy[q]));
  return drift;
}

double min_state_fidelity(const engine::CycleLedger& pulsed, const engine::CycleLedger& ideal) {
  double f = 1.0;
  for (std::size_t st = 0; st < pulsed.steps.size(); ++st)
    for (std::size_t q = 0; q < engine::kRegisterSize; ++q)
      f = std::min(f, fidelity(reduced_qubit(pulsed.steps[st].state, q), reduced_qubit(ideal.steps[st].state, q)));
  return f;
}

struct Compiled {
  nmr::MoleculeSpec molecule;
  std::vector<engine::CompiledCycle> per_temperature;  // indexed like kTemps
  double compile_seconds = 0.0;
  double sequence_seconds = 0.0;
};

std::optional<Compiled> compile_all(std::string& error) {
  const auto t0 = Clock::now();
  Compiled out;
  try {
    out.molecule = nmr::load_molecule(std::string(SZILARD_SOURCE_DIR) + "/data/synthetic_4spin.mol");
    const auto shared = pulse::compile_cycle(out.molecule, at(kTemps[0]), {}, false).cycle;
    for (double kT : kTemps) {
      auto cycle = shared;
      const auto rx = pulse::compile_cycle(out.molecule, at(kT), {}, true, {engine::kThermalizeRx}).cycle;
      cycle.pulses.insert(rx.pulses.begin(), rx.pulses.end());
      cycle.gate_fidelity.insert(rx.gate_fidelity.begin(), rx.gate_fidelity.end());
      out.per_temperature.push_back(std::move(cycle));
    }
  } catch (const std::exception& e) {
    error = e.what();
    return std::nullopt;
  }
  out.compile_seconds = seconds_since(t0);
  out.sequence_seconds = out.per_temperature.front().total_duration();
  return out;
}

void isolation(const Compiled* compiled) {
  const auto d = engine::CycleConfig::for_variant(engine::Variant::kD);
  const double ideal = isolation_drift(engine::run_cycle(d, at(kTemps[0])));
  double pulsed = std::numeric_limits<double>::infinity();
  if (compiled != nullptr) {
    const nmr::SpinSystem sys(compiled->molecule);
    pulsed = isolation_drift(engine::run_cycle(
        d, at(kTemps[0]), engine::PulseBackend{&sys, &compiled->per_temperature[0], nmr::Relaxation::kOff}));
  }
  verdict(4, "isolation (variant d)", ideal < 1e-9 && pulsed <= 0.05,
          fmt("ideal drift %.1e peV, ", ideal) + fmt("pulse drift %.6f peV", pulsed));
}

// Minimum reduced-state fidelity over variants a-d, every step and qubit.
double pulse_fidelity(const Compiled& c, nmr::Relaxation relaxation) {
  const nmr::SpinSystem sys(c.molecule);
  double f = 1.0;
  for (std::size_t i = 0; i < 3; ++i) {
    for (auto v : {engine::Variant::kA, engine::Variant::kB, engine::Variant::kC, engine::Variant::kD}) {
      if (v == engine::Variant::kD && i > 0) continue;
      const auto cfg = engine::CycleConfig::for_variant(v);
      const auto pulsed = engine::run_cycle(cfg, at(kTemps[i]), engine::PulseBackend{&sys, &c.per_temperature[i], relaxation});
      f = std::min(f, min_state_fidelity(pulsed, engine::run_cycle(cfg, at(kTemps[i]))));
    }
  }
  return f;
}

void fidelity_bar(const Compiled* compiled, const std::string& error, Clock::time_point t0) {
  if (compiled == nullptr) {
    verdict(5, "pulse fidelity", false, "compilation failed: " + error);
    return;
  }
  const double f = pulse_fidelity(*compiled, nmr::Relaxation::kOff);
  const double t = seconds_since(t0);
  verdict(5, "pulse fidelity", f >= 0.999 && t < 600.0,
          fmt("min fidelity %.6f", f) + fmt(" over variants a-d; compile %.1f s,", compiled->compile_seconds) +
              fmt(" total %.1f s", t));
}

void ledger_identity() {
  double worst = 0.0;
  for (double kT : random_temperatures(6)) {
    const auto l = engine::run_cycle(engine::CycleConfig::for_variant(engine::Variant::kA), at(kT));
    const double closed = at(kT).gap() * engine::ground_population(at(kT));
    worst = std::max({worst, std::abs(l.erasure_cost() - closed), std::abs(l.measurement_memory_drop() - closed),
                      std::abs(l.erasure_cost() - l.measurement_memory_drop())});
  }
  verdict(6, "ledger identity", worst < 1e-9, fmt("max disagreement %.1e peV over 50 temperatures", worst));
}

void theory_trace() {
  double worst = 0.0, worst_p = 0.0;
  const auto cycle = engine::CycleConfig::for_variant(engine::Variant::kA);
  for (double kT : random_temperatures(7)) {
    const auto l = engine::run_cycle(cycle, at(kT));
    const auto t = engine::theoretical_energy_trace(cycle, at(kT));
    for (std::size_t st = 0; st < engine::kSteps.size(); ++st)
      for (std::size_t q = 0; q < engine::kRegisterSize; ++q) worst = std::max(worst, std::abs(l.steps[st].energy[q] - t[st][q]));
    const double e = at(kT).hbar_omega();
    worst_p = std::max(worst_p, std::abs(l.energy(engine::Step::kThermalization, engine::Role::kP) + e * std::tanh(e / kT)));
  }
  verdict(7, "theory trace", worst < 1e-9 && worst_p < 1e-9,
          fmt("max deviation %.1e peV", worst) + fmt(", P after thermalization %.1e peV", worst_p));
}

void gradient_check() {
  constexpr double kPi = std::numbers::pi;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    nmr::MoleculeSpec m;
    m.n_spins = 2;
    m.frequencies = {2 * kPi * (u(rng) - 0.5) * 2000, 2 * kPi * (u(rng) - 0.5) * 2000};
    m.couplings = {{0.0, 10 + 90 * u(rng)}, {0.0, 0.0}};
    m.couplings[1][0] = m.couplings[0][1];
    m.t1 = {10.0, 10.0};
    m.t2 = {1.0, 1.0};
    const nmr::SpinSystem sys(m);

    // Haar-random target from the QR of a Gaussian matrix.
    std::normal_distribution<double> g;
    ComplexMatrix z(4, 4);
    for (Eigen::Index i = 0; i < 16; ++i) z(i) = Complex(g(rng), g(rng));
    Eigen::HouseholderQR<ComplexMatrix> qr(z);
    ComplexMatrix q = qr.householderQ();
    for (Eigen::Index k = 0; k < 4; ++k) q.col(k) *= std::polar(1.0, std::arg(qr.matrixQR()(k, k)));
    const pulse::GrapeObjective obj(sys, UnitaryOp(q), 1e-4);

    std::vector<nmr::PulseSegment> segs(12);
    for (auto& s : segs) s = {2 * kPi * 2000 * (0.1 + 0.9 * u(rng)), 2 * kPi * u(rng) - kPi};
    std::vector<double> da, dp;
    obj.fidelity_and_gradient(segs, da, dp);
    double err = 0.0, norm = 0.0;
    for (std::size_t j = 0; j < segs.size(); ++j) {
      for (int which = 0; which < 2; ++which) {
        const double h = which == 0 ? 1e-6 * segs[j].amplitude : 1e-6;
        auto plus = segs, minus = segs;
        (which == 0 ? plus[j].amplitude : plus[j].phase) += h;
        (which == 0 ? minus[j].amplitude : minus[j].phase) -= h;
        const double fd = (obj.fidelity(plus) - obj.fidelity(minus)) / (2 * h);
        const double an = which == 0 ? da[j] : dp[j];
        err += (an - fd) * (an - fd);
        norm += fd * fd;
      }
    }
    worst = std::max(worst, std::sqrt(err / norm));
  }
  verdict(8, "gradient check", worst < 1e-4, fmt("max relative error %.2e over 10 problems", worst));
}

void relaxation(const Compiled* compiled) {
  if (compiled == nullptr) {
    verdict(9, "relaxation", false, "no compiled pulses");
    return;
  }
  const double f = pulse_fidelity(*compiled, nmr::Relaxation::kOn);
  verdict(9, "relaxation", f >= 0.99,
          fmt("min fidelity %.6f with T1 = 10 s, T2 = 1 s;", f) +
              fmt(" gate time per cycle %.4f s", compiled->sequence_seconds));
}

void mc_calibration() {
  double lo = 1e9, hi = 0.0;
  const auto cycle = engine::CycleConfig::for_variant(engine::Variant::kA);
  for (double kT : kTemps) {
    const auto mc =
        metrology::monte_carlo_errorbars(cycle, at(kT), engine::IdealBackend{}, metrology::calibrated_noise(), 400, 1);
    lo = std::min(lo, mc.min_energy_std());
    hi = std::max(hi, mc.max_energy_std());
  }
  std::ostringstream sink;
  const bool pinned = app::run_selftest(sink);
  verdict(10, "monte carlo calibration", lo >= 0.05 && hi <= 0.15 && pinned,
          fmt("bars in [%.3f, ", lo) + fmt("%.3f] peV; selftest ", hi) + (pinned ? "passes" : "fails"));
}

}  // namespace

int main() {
  erasure_energies();
  weight_gain();
  weight_entropy();

  const auto t0 = Clock::now();
  std::string error;
  const auto compiled = compile_all(error);
  const Compiled* c = compiled ? &*compiled : nullptr;
  isolation(c);
  fidelity_bar(c, error, t0);

  ledger_identity();
  theory_trace();
  gradient_check();
  relaxation(c);
  mc_calibration();

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
