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

// Liquid-state NMR spin dynamics in the rotating frame: chemical-shift and
// scalar-coupling drift, one global RF control field, piecewise-constant
// propagation and per-spin T1/T2 relaxation.
//
// Internally everything is propagated with generators in rad/s (H / hbar);
// the *_hamiltonian functions return energies in peV.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "szilard/keyvalue.hpp"
#include "szilard/qcore.hpp"

namespace szilard {

/// Reduced Planck constant in peV * s.
inline constexpr double kHbarPeVs = 6.582119569e-4;

namespace nmr {

enum class FrequencyForm { kOffset, kAbsolute };

/// Spin-system parameters. Frequencies in rad/s, couplings in Hz, relaxation
/// times in seconds.
struct MoleculeSpec {
  std::size_t n_spins = 0;
  FrequencyForm form = FrequencyForm::kOffset;
  std::vector<double> frequencies;
  // Only meaningful for absolute frequencies.
  double rotating_frame = 0.0;
  // n_spins x n_spins, symmetric, zero diagonal.
  std::vector<std::vector<double>> couplings;
  std::vector<double> t1;
  std::vector<double> t2;

  /// omega_k - omega_R in rad/s.
  double offset(std::size_t k) const {
    return form == FrequencyForm::kOffset ? frequencies.at(k) : frequencies.at(k) - rotating_frame;
  }

  double coupling(std::size_t k, std::size_t n) const { return couplings.at(k).at(n); }

  std::size_t dim() const { return std::size_t{1} << n_spins; }

  double min_coupling() const {
    double m = INFINITY;
    for (std::size_t k = 0; k < n_spins; ++k) {
      for (std::size_t n = k + 1; n < n_spins; ++n) m = std::min(m, std::abs(couplings[k][n]));
    }
    return m;
  }

  void validate() const {
    if (n_spins < 1) throw std::invalid_argument("MoleculeSpec: n_spins must be >= 1");
    if (n_spins > 8) throw std::invalid_argument("MoleculeSpec: at most 8 spins supported");
    if (frequencies.size() != n_spins) throw std::invalid_argument("MoleculeSpec: need one frequency per spin");
    if (couplings.size() != n_spins) throw std::invalid_argument("MoleculeSpec: coupling table has wrong size");
    for (std::size_t k = 0; k < n_spins; ++k) {
      if (couplings[k].size() != n_spins) throw std::invalid_argument("MoleculeSpec: coupling table has wrong size");
      if (couplings[k][k] != 0.0) throw std::invalid_argument("MoleculeSpec: coupling diagonal must be zero");
      for (std::size_t n = 0; n < n_spins; ++n) {
        if (couplings[k][n] != couplings[n][k]) throw std::invalid_argument("MoleculeSpec: coupling table not symmetric");
      }
    }
    if (t1.size() != n_spins || t2.size() != n_spins) {
      throw std::invalid_argument("MoleculeSpec: need one T1 and T2 per spin");
    }
    for (std::size_t k = 0; k < n_spins; ++k) {
      if (!(t1[k] > 0.0) || !(t2[k] > 0.0)) throw std::invalid_argument("MoleculeSpec: relaxation times must be positive");
      if (t2[k] > 2.0 * t1[k]) throw std::invalid_argument("MoleculeSpec: T2 must not exceed 2*T1");
    }
  }
};

/// Rotating frame at the midpoint of the first and last spin frequencies.
inline double default_rotating_frame(const std::vector<double>& frequencies) {
  if (frequencies.empty()) return 0.0;
  return 0.5 * (frequencies.front() + frequencies.back());
}

/// Self-contained four-carbon test molecule: offsets within +-2 kHz,
/// couplings between 7 and 70 Hz, T1 = 10 s, T2 = 1 s. Spin order is the
/// engine register (W, P, M, A).
inline MoleculeSpec synthetic_molecule() {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  MoleculeSpec m;
  m.n_spins = 4;
  m.form = FrequencyForm::kOffset;
  m.frequencies = {two_pi * -1800.0, two_pi * -600.0, two_pi * 700.0, two_pi * 1900.0};
  m.couplings = {
      {0.0, 68.0, 38.0, 7.0},
      {68.0, 0.0, 70.0, 11.0},
      {38.0, 70.0, 0.0, 62.0},
      {7.0, 11.0, 62.0, 0.0},
  };
  m.t1 = std::vector<double>(4, 10.0);
  m.t2 = std::vector<double>(4, 1.0);
  return m;
}

// ---------------------------------------------------------------------------
// Molecule files.
//
//   n_spins = 4
//   frequency_form = offset          # offset | absolute
//   frequencies = f1, f2, ...        # rad/s
//   rotating_frame = ...             # rad/s, absolute form only
//   couplings = J12, J13, ..., J34   # Hz, upper triangle row by row,
//                                    # or the full n x n table
//   t1 = 10                          # s, one value or one per spin
//   t2 = 1

inline MoleculeSpec parse_molecule(const KeyValueFile& kv) {
  MoleculeSpec m;
  const auto n = kv.get_integer("n_spins");
  if (!n) throw ConfigError("n_spins", 0, "missing required key");
  if (*n < 1 || *n > 8) throw ConfigError("n_spins", kv.line_of("n_spins"), "must be between 1 and 8");
  m.n_spins = static_cast<std::size_t>(*n);
  const std::size_t ns = m.n_spins;

  if (const auto form = kv.get_string("frequency_form")) {
    if (*form == "offset") {
      m.form = FrequencyForm::kOffset;
    } else if (*form == "absolute") {
      m.form = FrequencyForm::kAbsolute;
    } else {
      throw ConfigError("frequency_form", kv.line_of("frequency_form"), "expected 'offset' or 'absolute'");
    }
  } else {
    throw ConfigError("frequency_form", 0, "missing required key (declare 'offset' or 'absolute')");
  }

  const auto freqs = kv.get_double_list("frequencies");
  if (!freqs) throw ConfigError("frequencies", 0, "missing required key");
  if (freqs->size() != ns) {
    throw ConfigError("frequencies", kv.line_of("frequencies"),
                      "expected " + std::to_string(ns) + " values, got " + std::to_string(freqs->size()));
  }
  m.frequencies = *freqs;

  if (const auto wr = kv.get_double("rotating_frame")) {
    if (m.form == FrequencyForm::kOffset) {
      throw ConfigError("rotating_frame", kv.line_of("rotating_frame"), "only allowed with absolute frequencies");
    }
    m.rotating_frame = *wr;
  } else if (m.form == FrequencyForm::kAbsolute) {
    m.rotating_frame = default_rotating_frame(m.frequencies);
  }

  m.couplings.assign(ns, std::vector<double>(ns, 0.0));
  const auto j = kv.get_double_list("couplings");
  const std::size_t jline = kv.line_of("couplings");
  if (!j) {
    if (ns > 1) throw ConfigError("couplings", 0, "missing required key");
  } else if (j->size() == ns * (ns - 1) / 2) {
    std::size_t idx = 0;
    for (std::size_t a = 0; a < ns; ++a) {
      for (std::size_t b = a + 1; b < ns; ++b) m.couplings[a][b] = m.couplings[b][a] = (*j)[idx++];
    }
  } else if (j->size() == ns * ns) {
    for (std::size_t a = 0; a < ns; ++a) {
      for (std::size_t b = 0; b < ns; ++b) m.couplings[a][b] = (*j)[a * ns + b];
    }
    for (std::size_t a = 0; a < ns; ++a) {
      if (m.couplings[a][a] != 0.0) throw ConfigError("couplings", jline, "diagonal entries must be zero");
      for (std::size_t b = a + 1; b < ns; ++b) {
        if (m.couplings[a][b] != m.couplings[b][a]) {
          throw ConfigError("couplings", jline,
                            "table is not symmetric at (" + std::to_string(a + 1) + "," + std::to_string(b + 1) + ")");
        }
      }
    }
  } else {
    throw ConfigError("couplings", jline, "expected n(n-1)/2 upper-triangle values or a full n x n table");
  }

  auto per_spin = [&](const std::string& key, double fallback) {
    const auto v = kv.get_double_list(key);
    std::vector<double> out;
    if (!v) {
      out.assign(ns, fallback);
    } else if (v->size() == 1) {
      out.assign(ns, v->front());
    } else if (v->size() == ns) {
      out = *v;
    } else {
      throw ConfigError(key, kv.line_of(key), "expected 1 or " + std::to_string(ns) + " values");
    }
    for (double t : out) {
      if (!(t > 0.0)) throw ConfigError(key, kv.line_of(key), "relaxation times must be positive");
    }
    return out;
  };
  m.t1 = per_spin("t1", 10.0);
  m.t2 = per_spin("t2", 1.0);
  for (std::size_t k = 0; k < ns; ++k) {
    if (m.t2[k] > 2.0 * m.t1[k]) throw ConfigError("t2", kv.line_of("t2"), "T2 must not exceed 2*T1");
  }

  if (const auto unknown = kv.unknown_keys(); !unknown.empty()) {
    throw ConfigError(unknown.front(), kv.line_of(unknown.front()), "unknown key");
  }
  m.validate();
  return m;
}

inline MoleculeSpec load_molecule(const std::string& path) { return parse_molecule(KeyValueFile::load(path)); }

inline void write_molecule(std::ostream& out, const MoleculeSpec& m) {
  out << "n_spins = " << m.n_spins << "\n";
  out << "frequency_form = " << (m.form == FrequencyForm::kOffset ? "offset" : "absolute") << "\n";
  out << "frequencies =";
  for (std::size_t k = 0; k < m.n_spins; ++k) out << (k ? ", " : " ") << format_double(m.frequencies[k]);
  out << "\n";
  if (m.form == FrequencyForm::kAbsolute) out << "rotating_frame = " << format_double(m.rotating_frame) << "\n";
  if (m.n_spins > 1) {
    out << "couplings =";
    bool first = true;
    for (std::size_t a = 0; a < m.n_spins; ++a) {
      for (std::size_t b = a + 1; b < m.n_spins; ++b) {
        out << (first ? " " : ", ") << format_double(m.couplings[a][b]);
        first = false;
      }
    }
    out << "\n";
  }
  out << "t1 =";
  for (std::size_t k = 0; k < m.n_spins; ++k) out << (k ? ", " : " ") << format_double(m.t1[k]);
  out << "\nt2 =";
  for (std::size_t k = 0; k < m.n_spins; ++k) out << (k ? ", " : " ") << format_double(m.t2[k]);
  out << "\n";
}

// ---------------------------------------------------------------------------

/// Piecewise-constant RF schedule: amplitude (rad/s, >= 0) and phase (rad)
/// per segment of fixed duration.
struct PulseSegment {
  double amplitude = 0.0;
  double phase = 0.0;
  bool operator==(const PulseSegment&) const = default;
};

struct PulseSequence {
  double segment_duration = 0.0;
  std::vector<PulseSegment> segments;

  double total_duration() const { return segment_duration * static_cast<double>(segments.size()); }
  double peak_amplitude() const {
    double p = 0.0;
    for (const auto& s : segments) p = std::max(p, s.amplitude);
    return p;
  }

  void validate() const {
    if (!(segment_duration > 0.0) || !std::isfinite(segment_duration)) {
      throw std::invalid_argument("PulseSequence: segment duration must be positive");
    }
    for (const auto& s : segments) {
      if (!(s.amplitude >= 0.0) || !std::isfinite(s.amplitude) || !std::isfinite(s.phase)) {
        throw std::invalid_argument("PulseSequence: amplitudes must be finite and non-negative");
      }
    }
  }

  bool operator==(const PulseSequence&) const = default;
};

// ---------------------------------------------------------------------------
// Hamiltonians.

/// Collective spin operators sum_k sigma_{x,k} and sum_k sigma_{y,k}.
inline ComplexMatrix collective_x(std::size_t n) {
  ComplexMatrix out = ComplexMatrix::Zero(std::size_t{1} << n, std::size_t{1} << n);
  for (std::size_t k = 0; k < n; ++k) out += embed(pauli_x(), {k}, n);
  return out;
}

inline ComplexMatrix collective_y(std::size_t n) {
  ComplexMatrix out = ComplexMatrix::Zero(std::size_t{1} << n, std::size_t{1} << n);
  for (std::size_t k = 0; k < n; ++k) out += embed(pauli_y(), {k}, n);
  return out;
}

/// Diagonal of H0 / hbar in rad/s. Each unordered pair contributes
/// pi*J*sz*sz/2 (the ordered-pair sum counts it twice).
inline RealVector drift_diagonal(const MoleculeSpec& m) {
  const std::size_t n = m.n_spins;
  const std::size_t dim = m.dim();
  RealVector d = RealVector::Zero(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    auto z = [&](std::size_t k) { return detail::bit_of(i, k, n) ? -1.0 : 1.0; };
    double e = 0.0;
    for (std::size_t k = 0; k < n; ++k) e += 0.5 * m.offset(k) * z(k);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t l = k + 1; l < n; ++l) e += 2.0 * std::numbers::pi * m.coupling(k, l) * z(k) * z(l) / 4.0;
    }
    d(i) = e;
  }
  return d;
}

inline ComplexMatrix drift_generator(const MoleculeSpec& m) {
  return drift_diagonal(m).cast<Complex>().asDiagonal();
}

/// H0 in peV.
inline ComplexMatrix drift_hamiltonian(const MoleculeSpec& m) { return kHbarPeVs * drift_generator(m); }

/// H_C / hbar in rad/s for one (amplitude, phase) setting.
inline ComplexMatrix control_generator(const MoleculeSpec& m, double amplitude, double phase) {
  if (amplitude < 0.0) throw std::invalid_argument("control_hamiltonian: amplitude must be non-negative");
  return 0.5 * amplitude * (std::cos(phase) * collective_x(m.n_spins) + std::sin(phase) * collective_y(m.n_spins));
}

/// H_C in peV.
inline ComplexMatrix control_hamiltonian(const MoleculeSpec& m, double amplitude, double phase) {
  return kHbarPeVs * control_generator(m, amplitude, phase);
}

/// exp(-i H0 t / hbar); diagonal.
inline UnitaryOp free_evolution(const MoleculeSpec& m, double t) {
  if (t < 0.0) throw std::invalid_argument("free_evolution: negative duration");
  const RealVector d = drift_diagonal(m);
  Eigen::VectorXcd phases(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) phases(i) = std::exp(Complex(0, -d(i) * t));
  return UnitaryOp(phases.asDiagonal().toDenseMatrix());
}

/// Eigendecomposition of one segment generator. The RF phase enters only as
/// a z-rotation, G(amp, phase) = R G'(amp) R^dagger with R = exp(-i phase
/// Z_total / 2) diagonal and G' real symmetric, so the solve is real.
struct SegmentSpectrum {
  Eigen::MatrixXd vectors;   // eigenvectors of G'
  RealVector values;         // rad/s
  Eigen::VectorXcd frame;    // diagonal of R

  /// exp(-i G dt).
  ComplexMatrix propagator(double dt) const {
    Eigen::VectorXcd e(values.size());
    for (Eigen::Index i = 0; i < values.size(); ++i) e(i) = std::exp(Complex(0, -values(i) * dt));
    ComplexMatrix u = (vectors * e.asDiagonal()) * vectors.transpose();
    return frame.asDiagonal() * u * frame.conjugate().asDiagonal();
  }
};

/// Precomputed operators for repeated propagation on one molecule.
class SpinSystem {
 public:
  explicit SpinSystem(MoleculeSpec m) : m_(std::move(m)) {
    m_.validate();
    const std::size_t n = m_.n_spins;
    drift_diag_ = drift_diagonal(m_);
    drift_ = drift_diag_.cast<Complex>().asDiagonal();
    x_ = collective_x(n);
    y_ = collective_y(n);
    x_real_ = x_.real();
    z_total_ = RealVector::Zero(static_cast<Eigen::Index>(m_.dim()));
    for (std::size_t i = 0; i < m_.dim(); ++i) {
      for (std::size_t k = 0; k < n; ++k) z_total_(i) += detail::bit_of(i, k, n) ? -1.0 : 1.0;
    }
  }

  const MoleculeSpec& molecule() const { return m_; }
  const ComplexMatrix& drift() const { return drift_; }
  const ComplexMatrix& sum_x() const { return x_; }
  const ComplexMatrix& sum_y() const { return y_; }
  std::size_t dim() const { return m_.dim(); }

  ComplexMatrix generator(const PulseSegment& s) const {
    return drift_ + 0.5 * s.amplitude * (std::cos(s.phase) * x_ + std::sin(s.phase) * y_);
  }

  SegmentSpectrum spectrum(const PulseSegment& s) const {
    Eigen::MatrixXd g = 0.5 * s.amplitude * x_real_;
    g.diagonal() += drift_diag_;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
    SegmentSpectrum out{es.eigenvectors(), es.eigenvalues(), Eigen::VectorXcd(z_total_.size())};
    for (Eigen::Index i = 0; i < z_total_.size(); ++i) out.frame(i) = std::exp(Complex(0, -0.5 * s.phase * z_total_(i)));
    return out;
  }

  ComplexMatrix segment_propagator(const PulseSegment& s, double dt) const { return spectrum(s).propagator(dt); }

  /// U_N ... U_1 for the whole sequence.
  ComplexMatrix sequence_propagator(const PulseSequence& pulse) const {
    pulse.validate();
    ComplexMatrix u = ComplexMatrix::Identity(dim(), dim());
    for (const auto& s : pulse.segments) u = segment_propagator(s, pulse.segment_duration) * u;
    return u;
  }

 private:
  MoleculeSpec m_;
  RealVector drift_diag_;
  ComplexMatrix drift_;
  ComplexMatrix x_;
  ComplexMatrix y_;
  Eigen::MatrixXd x_real_;
  RealVector z_total_;
};

inline UnitaryOp pulse_unitary(const SpinSystem& sys, const PulseSequence& pulse) {
  return UnitaryOp(sys.sequence_propagator(pulse));
}

// ---------------------------------------------------------------------------
// Relaxation: per-spin amplitude damping toward |0> (rate 1/T1) followed by
// pure dephasing so that single-spin coherences decay as exp(-t/T2).

inline void relax_in_place(ComplexMatrix& rho, const MoleculeSpec& m, double dt) {
  const std::size_t n = m.n_spins;
  const std::size_t dim = m.dim();
  for (std::size_t k = 0; k < n; ++k) {
    const double gamma = 1.0 - std::exp(-dt / m.t1[k]);
    const double coherence = std::exp(-dt / m.t2[k]);
    const std::size_t mask = std::size_t{1} << (n - 1 - k);
    ComplexMatrix next = rho;
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        const bool bi = (i & mask) != 0;
        const bool bj = (j & mask) != 0;
        if (bi && bj) {
          next(i, j) = (1.0 - gamma) * rho(i, j);
          next(i & ~mask, j & ~mask) += gamma * rho(i, j);
        } else if (bi != bj) {
          next(i, j) = coherence * rho(i, j);
        }
      }
    }
    rho = std::move(next);
  }
}

enum class Relaxation { kOff, kOn };

/// Evolves rho through every segment: rho <- U rho U^dagger, followed by
/// relaxation over the segment duration when enabled.
inline DensityMatrix propagate(const DensityMatrix& rho, const SpinSystem& sys, const PulseSequence& pulse,
                               Relaxation relaxation) {
  if (rho.dim() != sys.dim()) throw std::invalid_argument("propagate: state dimension does not match molecule");
  pulse.validate();
  ComplexMatrix r = rho.matrix();
  for (const auto& s : pulse.segments) {
    const ComplexMatrix u = sys.segment_propagator(s, pulse.segment_duration);
    r = u * r * u.adjoint();
    if (relaxation == Relaxation::kOn) relax_in_place(r, sys.molecule(), pulse.segment_duration);
  }
  r = 0.5 * (r + r.adjoint());
  r /= r.trace().real();
  return DensityMatrix(std::move(r));
}

inline DensityMatrix propagate(const DensityMatrix& rho, const MoleculeSpec& m, const PulseSequence& pulse,
                               Relaxation relaxation) {
  return propagate(rho, SpinSystem(m), pulse, relaxation);
}

// ---------------------------------------------------------------------------
// Pulse files:
//
//   # szilard pulse v1
//   segment_duration = <seconds>
//   segments = <count>
//   <amplitude rad/s> <phase rad>     (one row per segment)
//
// Numbers use the shortest round-trip representation, so write -> read is
// bit-exact.

inline void write_pulse(std::ostream& out, const PulseSequence& p) {
  out << "# szilard pulse v1\n";
  out << "segment_duration = " << format_double(p.segment_duration) << "\n";
  out << "segments = " << p.segments.size() << "\n";
  for (const auto& s : p.segments) out << format_double(s.amplitude) << " " << format_double(s.phase) << "\n";
}

inline std::string pulse_to_string(const PulseSequence& p) {
  std::ostringstream os;
  write_pulse(os, p);
  return os.str();
}

inline PulseSequence read_pulse(std::istream& in) {
  PulseSequence p;
  std::string raw;
  std::size_t line_no = 0;
  long long expected = -1;
  bool have_duration = false;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    if (const auto eq = line.find('='); eq != std::string_view::npos) {
      const auto key = detail::trim(line.substr(0, eq));
      const auto value = line.substr(eq + 1);
      if (key == "segment_duration") {
        const auto v = parse_double(value);
        if (!v || !(*v > 0.0)) throw ConfigError("segment_duration", line_no, "must be a positive number");
        p.segment_duration = *v;
        have_duration = true;
      } else if (key == "segments") {
        const auto v = parse_integer(value);
        if (!v || *v < 0) throw ConfigError("segments", line_no, "must be a non-negative integer");
        expected = *v;
      } else {
        throw ConfigError(std::string(key), line_no, "unknown key");
      }
      continue;
    }
    const auto space = line.find_first_of(" \t");
    if (space == std::string_view::npos) throw ConfigError("segment", line_no, "expected '<amplitude> <phase>'");
    const auto a = parse_double(line.substr(0, space));
    const auto ph = parse_double(line.substr(space + 1));
    if (!a || !ph) throw ConfigError("segment", line_no, "malformed number");
    if (*a < 0.0) throw ConfigError("segment", line_no, "amplitude must be non-negative");
    p.segments.push_back({*a, *ph});
  }
  if (!have_duration) throw ConfigError("segment_duration", 0, "missing");
  if (expected >= 0 && static_cast<std::size_t>(expected) != p.segments.size()) {
    throw ConfigError("segments", 0,
                      "declared " + std::to_string(expected) + " rows, found " + std::to_string(p.segments.size()));
  }
  return p;
}

inline PulseSequence pulse_from_string(const std::string& text) {
  std::istringstream in(text);
  return read_pulse(in);
}

}  // namespace nmr
}  // namespace szilard
