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

// Command-line front end: run, sweep, compile, selftest.
//
// Exit codes: 0 success, 1 invariant violation or internal error,
// 2 configuration error, 3 pulse compilation below the fidelity goal.

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "szilard/experiment.hpp"

namespace {

using szilard::ConfigError;
namespace app = szilard::app;

constexpr int kExitInvariant = 1;
constexpr int kExitConfig = 2;
constexpr int kExitCompile = 3;

constexpr const char* kUnits =
    "Units: energies in peV (printed with 6 decimals), angles in radians, "
    "times in seconds, omega in rad/s.";

// Command-line overrides share the config keys' names and validation.
struct Overrides {
  std::map<std::string, std::string> values;

  void add(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { values[key] = v; }, help + " [" + key + "]");
  }

  void apply(app::ExperimentConfig& c) const {
    for (const auto& [key, v] : values) app::apply_setting(c, key, v);
  }
};

void add_experiment_flags(CLI::App* cmd, Overrides& o) {
  o.add(cmd, "--variant", "experiment.variant", "cycle variant a, b, c or d");
  o.add(cmd, "--kT", "experiment.kT", "reservoir temperature k_B T in peV");
  o.add(cmd, "--omega", "experiment.omega", "qubit angular frequency in rad/s");
  o.add(cmd, "--mode", "experiment.mode", "ideal or pulse");
  o.add(cmd, "--molecule", "experiment.molecule", "molecule file (pulse mode)");
  o.add(cmd, "--pulse-dir", "experiment.pulse_dir", "directory of precompiled pulses");
  o.add(cmd, "--relaxation", "experiment.relaxation", "on or off");
  o.add(cmd, "--shots", "experiment.shots", "tomography shots per axis, or 'exact'");
  o.add(cmd, "--seed", "experiment.seed", "random seed");
  o.add(cmd, "--mc", "mc.enabled", "Monte Carlo error bars on or off");
  o.add(cmd, "--mc-samples", "mc.n_samples", "Monte Carlo samples");
  o.add(cmd, "--amplitude-jitter", "mc.amplitude_jitter", "relative pulse amplitude error (std)");
  o.add(cmd, "--phase-jitter", "mc.phase_jitter", "pulse phase error in rad (std)");
  o.add(cmd, "--gradient-jitter", "mc.gradient_jitter", "residual coherence after gradients (std)");
  o.add(cmd, "--readout-noise", "mc.readout_noise", "additive magnetization read-out error (std)");
  o.add(cmd, "--mc-relaxation", "mc.relaxation", "relaxation inside Monte Carlo runs, on or off");
  o.add(cmd, "--out", "output.path", "output path without extension");
  o.add(cmd, "--format", "output.format", "json, csv or both");
}

app::ExperimentConfig load_config(const std::string& path, const Overrides& o,
                                  std::optional<std::vector<double>>* temperatures = nullptr) {
  app::ExperimentConfig c;
  if (!path.empty()) {
    const auto kv = szilard::KeyValueFile::load(path);
    c = app::load_experiment(kv);
    const auto temps = app::sweep_temperatures(kv);
    if (temperatures != nullptr) *temperatures = temps;
  }
  o.apply(c);
  c.validate();
  return c;
}

void print_summary(const app::RunReport& r) {
  std::printf("variant %s  kT %s peV  mode %s\n", szilard::engine::variant_name(r.config.variant),
              app::fixed6(r.config.kT).c_str(), app::mode_name(r.config.mode));
  if (r.config.variant == szilard::engine::Variant::kD) {
    std::printf("  erasure cost          %s peV\n", app::fixed6(r.ledger.erasure_cost).c_str());
  } else {
    std::printf("  erasure cost          %s peV (closed form %s)\n", app::fixed6(r.ledger.erasure_cost).c_str(),
                app::fixed6(r.ledger.erasure_cost_closed_form).c_str());
  }
  std::printf("  weight work gain      %s peV\n", app::fixed6(r.ledger.weight_work_gain).c_str());
  std::printf("  weight kT*dS          %s peV\n", app::fixed6(r.ledger.entropy_variation_weight).c_str());
  std::printf("  min state fidelity    %s\n", app::fixed6(r.min_tomography_fidelity).c_str());
  if (r.pulses) std::printf("  sequence duration     %s s\n", szilard::format_double(r.pulses->sequence_duration).c_str());
  if (r.mc) {
    std::printf("  MC erasure cost       %s +- %s peV (%zu samples)\n", app::fixed6(r.mc->erasure_cost.mean).c_str(),
                app::fixed6(r.mc->erasure_cost.std).c_str(), r.mc->n_samples);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Four-qubit information engine simulator.\n" + std::string(kUnits)};
  cli.require_subcommand(1);

  std::string run_config;
  Overrides run_over;
  auto* run = cli.add_subcommand("run", "run one cycle and write a JSON report and a CSV energy table");
  run->add_option("--config", run_config, "experiment config file");
  add_experiment_flags(run, run_over);

  std::string sweep_config;
  std::string sweep_list;
  Overrides sweep_over;
  auto* sweep = cli.add_subcommand("sweep", "run the cycle at several temperatures; combined CSV");
  sweep->add_option("--config", sweep_config, "experiment config file ([sweep] kT = ... lists temperatures)");
  sweep->add_option("--kT-list", sweep_list, "temperatures in peV: 'a,b,c' or 'start:stop:count'");
  add_experiment_flags(sweep, sweep_over);

  app::CompileRequest creq;
  std::string gate_list;
  std::optional<double> c_duration, c_amp, c_goal, c_weight;
  std::optional<long long> c_segments, c_iters;
  auto* compile = cli.add_subcommand("compile", "optimize pulses for the cycle gates; one file per gate");
  compile->add_option("--molecule", creq.molecule, "molecule file")->required();
  compile->add_option("--gates", gate_list, "comma-separated gate labels, or 'identity' (default: all cycle gates)");
  compile->add_option("--kT", creq.kT, "temperature fixing the thermalization angle, peV");
  compile->add_option("--omega", creq.omega, "qubit angular frequency, rad/s");
  compile->add_option("--duration", c_duration, "gate duration, s");
  compile->add_option("--n-segments", c_segments, "piecewise-constant segments per gate");
  compile->add_option("--amp-limit", c_amp, "amplitude limit, Hz");
  compile->add_option("--fidelity-goal", c_goal, "required gate fidelity");
  compile->add_option("--exposure-weight", c_weight, "weight of the transverse-exposure penalty");
  compile->add_option("--max-iterations", c_iters, "iterations per start");
  compile->add_option("--seed", creq.seed, "optimizer seed");
  compile->add_option("--out", creq.out_dir, "output directory");

  auto* selftest = cli.add_subcommand("selftest", "check the analytic oracles and the noise calibration");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return cli.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return kExitConfig;
  }

  try {
    if (run->parsed()) {
      const auto config = load_config(run_config, run_over);
      const auto report = app::run_experiment(config);
      for (const auto& f : app::write_outputs(report)) std::printf("wrote %s\n", f.c_str());
      print_summary(report);
      return 0;
    }
    if (sweep->parsed()) {
      std::optional<std::vector<double>> temps;
      const auto config = load_config(sweep_config, sweep_over, &temps);
      if (!sweep_list.empty()) temps = app::parse_temperature_list("kT-list", sweep_list);
      if (!temps) throw ConfigError("sweep.kT", 0, "no temperatures given (use --kT-list or [sweep] kT)");
      const auto reports = app::run_sweep(config, *temps);
      for (const auto& f : app::write_sweep_outputs(reports)) std::printf("wrote %s\n", f.c_str());
      for (const auto& r : reports) print_summary(r);
      return 0;
    }
    if (compile->parsed()) {
      if (!gate_list.empty()) {
        std::string token;
        for (char ch : gate_list + ",") {
          if (ch == ',') {
            if (!token.empty()) creq.gates.push_back(token);
            token.clear();
          } else if (ch != ' ') {
            token.push_back(ch);
          }
        }
      }
      creq.duration = c_duration;
      creq.n_segments = c_segments;
      creq.amp_limit_hz = c_amp;
      creq.fidelity_goal = c_goal;
      creq.exposure_weight = c_weight;
      creq.max_iterations = c_iters;
      const auto summary = app::compile_pulses(creq);
      std::printf("%-20s %10s %12s %9s %9s\n", "gate", "fidelity", "duration_s", "segments", "exposure");
      for (const auto& g : summary.gates) {
        std::printf("%-20s %10.6f %12s %9zu %9.4f%s\n", g.label.c_str(), g.fidelity,
                    szilard::format_double(g.duration).c_str(), g.segments, g.exposure, g.converged ? "" : "  BELOW GOAL");
      }
      std::printf("total duration %s s; files in %s\n", szilard::format_double(summary.total_duration).c_str(),
                  creq.out_dir.c_str());
      if (!summary.failed.empty()) {
        std::fprintf(stderr, "error: below fidelity goal:");
        for (const auto& f : summary.failed) std::fprintf(stderr, " %s", f.c_str());
        std::fprintf(stderr, "\n");
        return kExitCompile;
      }
      return 0;
    }
    if (selftest->parsed()) return app::run_selftest(std::cout) ? 0 : kExitInvariant;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const szilard::pulse::CompilationError& e) {
    std::fprintf(stderr, "compile error: %s\n", e.what());
    return kExitCompile;
  } catch (const app::InvariantError& e) {
    std::fprintf(stderr, "invariant violated: %s\n", e.what());
    return kExitInvariant;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInvariant;
  }
  return 0;
}
