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

// GRAPE-style pulse compiler. Controls are piecewise-constant (amplitude,
// phase) pairs for the single global RF field; the objective is the
// phase-insensitive gate fidelity |Tr(T^dagger U)|^2 / d^2. Gradients are
// exact: each segment propagator is built from the eigendecomposition of its
// generator, which also gives the Frechet derivative in closed form.
//
// The search is quasi-Newton (L-BFGS) with a monotone backtracking line
// search; amplitudes are kept in [0, amp_limit] by reflecting negative values
// into the phase and clipping at the limit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "szilard/engine.hpp"
#include "szilard/nmr.hpp"
#include "szilard/qcore.hpp"

namespace szilard::pulse {

/// |Tr(target^dagger u)|^2 / d^2, insensitive to global phase.
inline double gate_fidelity(const UnitaryOp& u, const UnitaryOp& target) {
  if (u.dim() != target.dim()) throw std::invalid_argument("gate_fidelity: dimension mismatch");
  const double d = static_cast<double>(u.dim());
  return std::norm((target.matrix().adjoint() * u.matrix()).trace()) / (d * d);
}

struct OptimizationProblem {
  nmr::MoleculeSpec molecule;
  UnitaryOp target = UnitaryOp::identity(2);
  double duration = 0.0;       // s
  std::size_t n_segments = 0;
  double amp_limit = 0.0;      // rad/s
  double fidelity_goal = 0.999;
  std::uint64_t seed = 1;

  std::size_t n_starts = 8;
  std::size_t max_iterations = 1000;
  // Iteration stops once this fidelity is reached; 0 means fidelity_goal.
  double stop_fidelity = 0.0;
  // Skip the remaining starts once one start reaches the goal. Starts run in
  // seed order, so the result stays deterministic.
  bool stop_at_goal = false;
  // With a positive weight each start first maximizes
  // fidelity - exposure_weight * exposure for max_iterations, then polishes
  // the plain fidelity up to the stop value for at most polish_iterations.
  double exposure_weight = 0.0;
  std::size_t polish_iterations = 1000;

  double segment_duration() const { return duration / static_cast<double>(n_segments); }

  void validate() const {
    if (n_segments == 0) throw std::invalid_argument("OptimizationProblem: n_segments must be positive");
    if (!(duration > 0.0)) throw std::invalid_argument("OptimizationProblem: duration must be positive");
    if (!(amp_limit > 0.0)) throw std::invalid_argument("OptimizationProblem: amp_limit must be positive");
    if (!(fidelity_goal > 0.0 && fidelity_goal <= 1.0)) {
      throw std::invalid_argument("OptimizationProblem: fidelity_goal must be in (0, 1]");
    }
    if (n_starts == 0) throw std::invalid_argument("OptimizationProblem: n_starts must be positive");
    if (!(exposure_weight >= 0.0)) throw std::invalid_argument("OptimizationProblem: exposure_weight must be >= 0");
    molecule.validate();
    if (target.dim() != molecule.dim()) throw std::invalid_argument("OptimizationProblem: target does not match molecule");
  }
};

struct OptimizationReport {
  nmr::PulseSequence pulse;
  double achieved_fidelity = 0.0;
  std::size_t iterations = 0;  // of the winning start
  bool converged = false;
  // Gradient norm in the optimizer's coordinates (quadratures / amp_limit).
  double gradient_norm_final = 0.0;
  std::size_t start_index = 0;
  std::size_t starts_run = 0;
  std::vector<double> trajectory;  // accepted fidelities of the winning start
  // Accepted penalized objective values of the winning start's first phase.
  std::vector<double> shaping_trajectory;
  double exposure = 0.0;
};

/// Fidelity and its exact gradient with respect to every segment's
/// amplitude and phase.
class GrapeObjective {
 public:
  GrapeObjective(const nmr::SpinSystem& system, const UnitaryOp& target, double segment_duration)
      : sys_(system), target_adj_(target.matrix().adjoint()), dt_(segment_duration) {
    if (target.dim() != system.dim()) throw std::invalid_argument("GrapeObjective: target does not match molecule");
    if (!(dt_ > 0.0)) throw std::invalid_argument("GrapeObjective: segment duration must be positive");
  }

  std::size_t dim() const { return sys_.dim(); }

  double fidelity(const std::vector<nmr::PulseSegment>& segs) const {
    ComplexMatrix u = ComplexMatrix::Identity(dim(), dim());
    for (const auto& s : segs) u = propagator(s) * u;
    return normalize(target_adj_.cwiseProduct(u.transpose()).sum());
  }

  /// Returns the fidelity; fills d/d(amplitude) and d/d(phase) per segment.
  double fidelity_and_gradient(const std::vector<nmr::PulseSegment>& segs, std::vector<double>& d_amp,
                               std::vector<double>& d_phase) const {
    const double f = fidelity_and_quadrature_gradient(segs, d_amp, d_phase);
    for (std::size_t j = 0; j < segs.size(); ++j) {
      const double c = std::cos(segs[j].phase), s = std::sin(segs[j].phase);
      const double dx = d_amp[j], dy = d_phase[j];
      d_amp[j] = c * dx + s * dy;
      d_phase[j] = segs[j].amplitude * (-s * dx + c * dy);
    }
    return f;
  }

  /// Same, with respect to the quadratures u_x = amp cos(phase) and
  /// u_y = amp sin(phase) of every segment.
  double fidelity_and_quadrature_gradient(const std::vector<nmr::PulseSegment>& segs, std::vector<double>& d_x,
                                          std::vector<double>& d_y) const {
    return objective_and_quadrature_gradient(segs, 0.0, d_x, d_y).fidelity;
  }

  /// Mean transverse exposure in [0, 1]: 1 - <Z_k>^2 averaged over spins k,
  /// computational-basis inputs and segment ends. Dephasing acts on a spin
  /// only while it is off the z axis, so this is a cheap proxy for T2 loss.
  double exposure(const std::vector<nmr::PulseSegment>& segs) const {
    const auto d = static_cast<Eigen::Index>(dim());
    ComplexMatrix u = ComplexMatrix::Identity(d, d);
    double acc = 0.0;
    for (const auto& s : segs) {
      u = propagator(s) * u;
      acc += exposure_at(u, nullptr);
    }
    return acc / static_cast<double>(segs.size());
  }

  struct Value {
    double objective = 0.0;  // fidelity - weight * exposure
    double fidelity = 0.0;
    double exposure = 0.0;
  };

  /// Quadrature gradient of fidelity - weight * exposure. The exposure term
  /// is skipped entirely when weight is 0.
  Value objective_and_quadrature_gradient(const std::vector<nmr::PulseSegment>& segs, double weight,
                                          std::vector<double>& d_x, std::vector<double>& d_y) const {
    const std::size_t n = segs.size();
    const auto d = static_cast<Eigen::Index>(dim());
    const bool penalized = weight != 0.0;
    std::vector<nmr::SegmentSpectrum> spec(n);
    std::vector<ComplexMatrix> props(n);
    // fwd[j] = U_{j-1} ... U_1, the product before segment j.
    std::vector<ComplexMatrix> fwd(n + 1);
    fwd[0] = ComplexMatrix::Identity(d, d);
    for (std::size_t j = 0; j < n; ++j) {
      spec[j] = sys_.spectrum(segs[j]);
      props[j] = spec[j].propagator(dt_);
      fwd[j + 1] = props[j] * fwd[j];
    }
    const Complex g = target_adj_.cwiseProduct(fwd[n].transpose()).sum();
    const double dd = static_cast<double>(d) * static_cast<double>(d);

    Value value;
    value.fidelity = std::norm(g) / dd;
    // Per segment end j: lambda[j] holds sum_k diag(<Z_k>) Psi_j^dagger Z_k.
    std::vector<ComplexMatrix> lambda;
    if (penalized) {
      lambda.resize(n);
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += exposure_at(fwd[j + 1], &lambda[j]);
      value.exposure = acc / static_cast<double>(n);
    }
    value.objective = value.fidelity - weight * value.exposure;
    // d(exposure) = -(2 / (N n_spins d)) sum 2 Re Tr(M_p dU); the contraction
    // below returns 2 Tr(M dU) for both terms.
    const double pen_scale =
        penalized ? 2.0 * weight / (static_cast<double>(n) * static_cast<double>(sys_.molecule().n_spins) * static_cast<double>(d))
                  : 0.0;

    d_x.assign(n, 0.0);
    d_y.assign(n, 0.0);
    ComplexMatrix back = target_adj_;  // T^dagger U_N ... U_{j+1}
    ComplexMatrix tail;                // sum_{i >= j} lambda_i U_i ... U_{j+1}
    ComplexMatrix k(d, d);
    Eigen::VectorXcd half_phase(d), full_phase(d);
    for (std::size_t jj = n; jj-- > 0;) {
      ComplexMatrix mtot = (std::conj(g) / dd) * (fwd[jj] * back);
      if (penalized) {
        tail = jj + 1 == n ? lambda[jj] : ComplexMatrix(lambda[jj] + tail * props[jj + 1]);
        mtot += pen_scale * (fwd[jj] * tail);
      }
      // With V = R V': W = V^dagger M V and L = conj(V) K V^T, where
      // K_ab = Gamma_ab W_ba and dg = sum_cd Z_cd L_cd for control operator Z.
      const Eigen::MatrixXd& v = spec[jj].vectors;
      const Eigen::VectorXcd& r = spec[jj].frame;
      const ComplexMatrix m = r.conjugate().asDiagonal() * mtot * r.asDiagonal();
      const ComplexMatrix w = v.transpose() * (m * v);
      const RealVector& l = spec[jj].values;
      // Gamma_ab = (e_a - e_b) / (l_a - l_b), or -i dt h_a h_b sinc((l_a - l_b) dt / 2)
      // near degeneracy, with e = exp(-i l dt) and h = exp(-i l dt / 2).
      for (Eigen::Index a = 0; a < d; ++a) {
        half_phase(a) = std::exp(Complex(0, -0.5 * l(a) * dt_));
        full_phase(a) = half_phase(a) * half_phase(a);
      }
      for (Eigen::Index b = 0; b < d; ++b) {
        for (Eigen::Index a = 0; a < d; ++a) {
          const double half = 0.5 * (l(a) - l(b)) * dt_;
          Complex gamma;
          if (std::abs(half) < 1e-3) {
            const double h2 = half * half;
            gamma = Complex(0, -dt_) * half_phase(a) * half_phase(b) * (1.0 - h2 / 6.0 + h2 * h2 / 120.0);
          } else {
            gamma = (full_phase(a) - full_phase(b)) / (l(a) - l(b));
          }
          k(a, b) = gamma * w(b, a);
        }
      }
      const ComplexMatrix lmat = r.conjugate().asDiagonal() * (v * (k * v.transpose())) * r.asDiagonal();
      // dG/du_x = X/2, dG/du_y = Y/2.
      d_x[jj] = sys_.sum_x().cwiseProduct(lmat).sum().real();
      d_y[jj] = sys_.sum_y().cwiseProduct(lmat).sum().real();
      back = back * props[jj];
    }
    return value;
  }

 private:
  ComplexMatrix propagator(const nmr::PulseSegment& s) const { return sys_.segment_propagator(s, dt_); }

  // Exposure of the columns of psi averaged over spins and columns; fills
  // lambda(b, c) = conj(psi(c, b)) sum_k <Z_k>_b z_k(c) when requested.
  double exposure_at(const ComplexMatrix& psi, ComplexMatrix* lambda) const {
    const auto d = psi.rows();
    const std::size_t ns = sys_.molecule().n_spins;
    const Eigen::MatrixXd pop = psi.cwiseAbs2();  // pop(c, b) = |<c|psi_b>|^2
    Eigen::MatrixXd zval(static_cast<Eigen::Index>(ns), d);  // <Z_k>_b
    for (std::size_t q = 0; q < ns; ++q) {
      for (Eigen::Index b = 0; b < d; ++b) {
        double z = 0.0;
        for (Eigen::Index c = 0; c < d; ++c) z += pop(c, b) * zsign(c, q);
        zval(static_cast<Eigen::Index>(q), b) = z;
      }
    }
    if (lambda != nullptr) {
      lambda->resize(d, d);
      for (Eigen::Index c = 0; c < d; ++c) {
        for (Eigen::Index b = 0; b < d; ++b) {
          double acc = 0.0;
          for (std::size_t q = 0; q < ns; ++q) acc += zval(static_cast<Eigen::Index>(q), b) * zsign(c, q);
          (*lambda)(b, c) = std::conj(psi(c, b)) * acc;
        }
      }
    }
    return 1.0 - zval.squaredNorm() / (static_cast<double>(ns) * static_cast<double>(d));
  }

  double zsign(Eigen::Index basis, std::size_t q) const {
    return detail::bit_of(static_cast<std::size_t>(basis), q, sys_.molecule().n_spins) ? -1.0 : 1.0;
  }

  double normalize(Complex g) const {
    const double d = static_cast<double>(dim());
    return std::norm(g) / (d * d);
  }

  const nmr::SpinSystem& sys_;
  ComplexMatrix target_adj_;
  double dt_;
};

namespace detail {

struct StartResult {
  std::vector<nmr::PulseSegment> segments;
  double fidelity = 0.0;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
  std::vector<double> trajectory;
  std::vector<double> shaping_trajectory;
};

// Optimizer coordinates are the quadratures scaled by amp_limit:
// x[j] = amp_j cos(phase_j) / amp_limit, x[n + j] = amp_j sin(phase_j) / amp_limit.
// The feasible set is the unit disk per segment, which keeps the search
// smooth where the amplitude passes through zero.
inline std::vector<nmr::PulseSegment> to_segments(const Eigen::VectorXd& x, double amp_limit) {
  const std::size_t n = static_cast<std::size_t>(x.size() / 2);
  std::vector<nmr::PulseSegment> segs(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double ux = x(static_cast<Eigen::Index>(j)), uy = x(static_cast<Eigen::Index>(n + j));
    segs[j] = {std::hypot(ux, uy) * amp_limit, std::atan2(uy, ux)};
  }
  return segs;
}

inline Eigen::VectorXd from_segments(const std::vector<nmr::PulseSegment>& segs, double amp_limit) {
  const std::size_t n = segs.size();
  Eigen::VectorXd x(static_cast<Eigen::Index>(2 * n));
  for (std::size_t j = 0; j < n; ++j) {
    x(static_cast<Eigen::Index>(j)) = segs[j].amplitude * std::cos(segs[j].phase) / amp_limit;
    x(static_cast<Eigen::Index>(n + j)) = segs[j].amplitude * std::sin(segs[j].phase) / amp_limit;
  }
  return x;
}

// Radial clipping onto the amplitude limit.
inline void project(Eigen::VectorXd& x) {
  const Eigen::Index n = x.size() / 2;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double r = std::hypot(x(j), x(n + j));
    if (r > 1.0) {
      x(j) /= r;
      x(n + j) /= r;
    }
  }
}

// Maximizes fidelity - exposure_weight * exposure until the fidelity reaches
// stop_fidelity or the iteration budget runs out.
inline StartResult run_start(const GrapeObjective& obj, Eigen::VectorXd x, double amp_limit, double stop_fidelity,
                             std::size_t max_iterations, double exposure_weight = 0.0) {
  const Eigen::Index nvar = x.size();
  const std::size_t n = static_cast<std::size_t>(nvar / 2);
  project(x);

  std::vector<double> dx, dy;
  GrapeObjective::Value last;
  auto evaluate = [&](const Eigen::VectorXd& at, Eigen::VectorXd& grad) {
    last = obj.objective_and_quadrature_gradient(to_segments(at, amp_limit), exposure_weight, dx, dy);
    grad.resize(nvar);
    for (std::size_t j = 0; j < n; ++j) {
      grad(static_cast<Eigen::Index>(j)) = dx[j] * amp_limit;
      grad(static_cast<Eigen::Index>(n + j)) = dy[j] * amp_limit;
    }
    return last.objective;
  };

  Eigen::VectorXd grad;
  double fid = evaluate(x, grad);  // the objective; equal to the fidelity when unweighted
  double true_fid = last.fidelity;
  StartResult out;
  out.trajectory.push_back(fid);

  constexpr std::size_t kMemory = 20;
  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  auto reset = [&] {
    s_hist.clear();
    y_hist.clear();
    rho_hist.clear();
  };

  std::size_t it = 0;
  for (; it < max_iterations && true_fid < stop_fidelity; ++it) {
    // Two-loop recursion on f = 1 - fidelity, whose gradient is -grad.
    Eigen::VectorXd q = -grad;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * s_hist[k].dot(q);
      q -= alpha[k] * y_hist[k];
    }
    if (!s_hist.empty()) {
      q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      for (std::size_t k = 0; k < s_hist.size(); ++k) {
        const double beta = rho_hist[k] * y_hist[k].dot(q);
        q += s_hist[k] * (alpha[k] - beta);
      }
    } else {
      q *= 0.05 / std::max(q.cwiseAbs().maxCoeff(), 1e-300);
    }
    Eigen::VectorXd dir = -q;  // descent direction for f
    double slope = -grad.dot(dir);
    if (!(slope < 0.0)) {
      reset();
      dir = grad * (0.05 / std::max(grad.cwiseAbs().maxCoeff(), 1e-300));
      slope = -grad.dot(dir);
    }

    bool accepted = false;
    Eigen::VectorXd x_new, g_new;
    double f_new = fid;
    double step = 1.0;
    for (int bt = 0; bt < 40; ++bt, step *= 0.5) {
      x_new = x + step * dir;
      project(x_new);
      f_new = evaluate(x_new, g_new);
      // Armijo on f = 1 - fidelity; a step that lowers the fidelity is never taken.
      if (f_new > fid && (1.0 - f_new) <= (1.0 - fid) + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (s_hist.empty()) break;  // steepest ascent also failed: stationary point
      reset();
      continue;
    }

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd y = -(g_new - grad);
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x = std::move(x_new);
    grad = std::move(g_new);
    fid = f_new;
    true_fid = last.fidelity;
    out.trajectory.push_back(fid);
    if (grad.norm() < 1e-12) {
      ++it;
      break;
    }
  }

  out.segments = to_segments(x, amp_limit);
  out.fidelity = true_fid;
  out.iterations = it;
  out.gradient_norm = grad.norm();
  return out;
}

inline Eigen::VectorXd random_start(std::size_t n, std::uint64_t seed, std::size_t start) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(start)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> amp(0.05, 0.5);
  std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);
  std::vector<nmr::PulseSegment> segs(n);
  for (auto& s : segs) s.amplitude = amp(rng);
  for (auto& s : segs) s.phase = phase(rng);
  return from_segments(segs, 1.0);
}

}  // namespace detail

/// Multi-start GRAPE. Non-convergence is reported, not thrown.
inline OptimizationReport optimize(const OptimizationProblem& problem) {
  problem.validate();
  const nmr::SpinSystem sys(problem.molecule);
  const double dt = problem.segment_duration();
  const GrapeObjective obj(sys, problem.target, dt);
  const double stop = problem.stop_fidelity > 0.0 ? problem.stop_fidelity : problem.fidelity_goal;

  OptimizationReport report;
  report.pulse.segment_duration = dt;

  // A zero-amplitude pulse that already meets the goal wins outright.
  const std::vector<nmr::PulseSegment> zero(problem.n_segments);
  if (const double f0 = obj.fidelity(zero); f0 >= stop) {
    report.pulse.segments = zero;
    report.achieved_fidelity = f0;
    report.converged = f0 >= problem.fidelity_goal;
    report.trajectory = {f0};
    return report;
  }

  detail::StartResult best;
  best.fidelity = -1.0;
  for (std::size_t start = 0; start < problem.n_starts; ++start) {
    const Eigen::VectorXd x0 = detail::random_start(problem.n_segments, problem.seed, start);
    detail::StartResult result;
    if (problem.exposure_weight > 0.0) {
      auto shaped = detail::run_start(obj, x0, problem.amp_limit, INFINITY, problem.max_iterations,
                                      problem.exposure_weight);
      result = detail::run_start(obj, detail::from_segments(shaped.segments, problem.amp_limit), problem.amp_limit, stop,
                                 problem.polish_iterations);
      result.iterations += shaped.iterations;
      result.shaping_trajectory = std::move(shaped.trajectory);
    } else {
      result = detail::run_start(obj, x0, problem.amp_limit, stop, problem.max_iterations);
    }
    ++report.starts_run;
    if (result.fidelity > best.fidelity) {
      best = std::move(result);
      report.start_index = start;
    }
    if (problem.stop_at_goal && best.fidelity >= problem.fidelity_goal) break;
  }

  report.pulse.segments = std::move(best.segments);
  report.exposure = obj.exposure(report.pulse.segments);
  // Recompute through the propagation path rather than trusting the
  // optimizer's running value.
  report.achieved_fidelity = gate_fidelity(nmr::pulse_unitary(sys, report.pulse), problem.target);
  report.iterations = best.iterations;
  report.gradient_norm_final = best.gradient_norm;
  report.trajectory = std::move(best.trajectory);
  report.shaping_trajectory = std::move(best.shaping_trajectory);
  report.converged = report.achieved_fidelity >= problem.fidelity_goal;
  return report;
}

// ---------------------------------------------------------------------------
// Whole-cycle compilation.

struct GateSettings {
  double duration = 0.0;         // s
  double segment_duration = 1e-5;  // s
  double amp_limit = 0.0;        // rad/s
  double fidelity_goal = 0.999;
  double stop_fidelity = 0.0;    // 0: same as fidelity_goal
  std::size_t n_starts = 8;
  std::size_t max_iterations = 1000;
  std::uint64_t seed = 1;
  double exposure_weight = 0.0;
  std::size_t polish_iterations = 1000;

  std::size_t n_segments() const {
    if (!(segment_duration > 0.0)) return 0;
    return static_cast<std::size_t>(std::llround(duration / segment_duration));
  }
};

class CompilationError : public std::runtime_error {
 public:
  CompilationError(std::vector<std::string> gates, const std::string& message)
      : std::runtime_error(message), gates_(std::move(gates)) {}
  const std::vector<std::string>& gates() const { return gates_; }

 private:
  std::vector<std::string> gates_;
};

/// Circuit gates that need a pulse (everything but the Gz channel), keyed by
/// label, for the given temperature.
inline std::vector<engine::CircuitGate> compilable_gates(const engine::EngineParams& params, bool include_thermalization) {
  const auto circuit = engine::engine_circuit(engine::CycleConfig::for_variant(engine::Variant::kA), params);
  std::vector<engine::CircuitGate> out;
  for (const auto& step : circuit) {
    for (const auto& g : step.gates) {
      if (std::holds_alternative<engine::gate::Gz>(g.spec)) continue;
      if (!include_thermalization && g.label == engine::kThermalizeRx) continue;
      out.push_back(g);
    }
  }
  return out;
}

/// Number of 1/(2J) coupling periods budgeted per gate, applied to the
/// weakest coupling among the gate's qubits.
inline double coupling_periods(const engine::GateSpec& spec) {
  return std::visit(
      [](const auto& g) -> double {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, engine::gate::Cnot>) return 1.4;
        if constexpr (std::is_same_v<T, engine::gate::Swap>) return 3.4;
        if constexpr (std::is_same_v<T, engine::gate::Cswap>) return 2.3;
        if constexpr (std::is_same_v<T, engine::gate::CrotSwap>) return 2.3;
        return 0.0;
      },
      spec);
}

inline std::vector<std::size_t> gate_qubits(const engine::GateSpec& spec) {
  return std::visit(
      [](const auto& g) -> std::vector<std::size_t> {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, engine::gate::Rx>) {
          return {g.target};
        } else if constexpr (std::is_same_v<T, engine::gate::Gz>) {
          return g.subset;
        } else if constexpr (std::is_same_v<T, engine::gate::Cnot>) {
          return {g.control, g.target};
        } else if constexpr (std::is_same_v<T, engine::gate::Swap>) {
          return {g.t1, g.t2};
        } else {
          return {g.control, g.t1, g.t2};
        }
      },
      spec);
}

/// Default optimizer settings for one circuit gate on a molecule.
inline GateSettings default_gate_settings(const engine::CircuitGate& g, const nmr::MoleculeSpec& m) {
  GateSettings s;
  s.segment_duration = 2e-4;
  s.amp_limit = 2.0 * std::numbers::pi * 2500.0;
  s.stop_fidelity = 0.9999;
  s.max_iterations = 3000;
  s.polish_iterations = 3000;
  s.n_starts = 4;
  s.exposure_weight = 0.1;
  const auto qs = gate_qubits(g.spec);
  if (qs.size() == 1) {
    s.duration = 3e-3;
    s.segment_duration = 1e-4;
    s.amp_limit = 2.0 * std::numbers::pi * 5000.0;
    return s;
  }
  double jmin = INFINITY;
  for (std::size_t a = 0; a < qs.size(); ++a) {
    for (std::size_t b = a + 1; b < qs.size(); ++b) jmin = std::min(jmin, std::abs(m.coupling(qs[a], qs[b])));
  }
  const double period = 1.0 / (2.0 * jmin);
  s.duration = std::ceil(coupling_periods(g.spec) * period / s.segment_duration) * s.segment_duration;
  return s;
}

/// Optimizes one gate on a molecule with the given settings.
inline OptimizationReport compile_gate(const nmr::MoleculeSpec& molecule, const UnitaryOp& target,
                                       const GateSettings& s) {
  OptimizationProblem prob;
  prob.molecule = molecule;
  prob.target = target;
  prob.duration = s.duration;
  prob.n_segments = s.n_segments();
  prob.amp_limit = s.amp_limit;
  prob.fidelity_goal = s.fidelity_goal;
  prob.stop_fidelity = s.stop_fidelity;
  prob.n_starts = s.n_starts;
  prob.max_iterations = s.max_iterations;
  prob.seed = s.seed;
  prob.stop_at_goal = true;
  prob.exposure_weight = s.exposure_weight;
  prob.polish_iterations = s.polish_iterations;
  return optimize(prob);
}

struct CompileResult {
  engine::CompiledCycle cycle;
  std::map<std::string, OptimizationReport> reports;
};

/// Compiles the selected circuit gates (empty selection: all). Settings not
/// listed in `overrides` come from default_gate_settings.
inline CompileResult compile_cycle(const nmr::MoleculeSpec& molecule, const engine::EngineParams& params,
                                   const std::map<std::string, GateSettings>& overrides = {},
                                   bool include_thermalization = true, const std::vector<std::string>& selection = {}) {
  molecule.validate();
  if (molecule.n_spins < engine::kRegisterSize) {
    throw std::invalid_argument("compile_cycle: the engine needs a molecule with at least 4 spins");
  }
  CompileResult out;
  std::vector<std::string> failed;
  for (const auto& g : compilable_gates(params, include_thermalization)) {
    if (!selection.empty() && std::find(selection.begin(), selection.end(), g.label) == selection.end()) continue;
    const auto it = overrides.find(g.label);
    const GateSettings s = it != overrides.end() ? it->second : default_gate_settings(g, molecule);
    auto report = compile_gate(molecule, engine::build_unitary(g.spec, molecule.n_spins), s);
    if (!report.converged) failed.push_back(g.label);
    out.cycle.pulses[g.label] = report.pulse;
    out.cycle.gate_fidelity[g.label] = report.achieved_fidelity;
    out.reports.emplace(g.label, std::move(report));
  }
  if (!failed.empty()) {
    std::string msg = "pulse compilation below fidelity goal for:";
    for (const auto& f : failed) msg += " " + f;
    throw CompilationError(failed, msg);
  }
  return out;
}

}  // namespace szilard::pulse
