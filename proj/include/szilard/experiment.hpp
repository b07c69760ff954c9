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

// Experiment configuration, execution and reporting. Energies are in peV,
// angles in radians and times in seconds throughout.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "szilard/engine.hpp"
#include "szilard/keyvalue.hpp"
#include "szilard/metrology.hpp"
#include "szilard/nmr.hpp"
#include "szilard/pulse_opt.hpp"
#include "szilard/qcore.hpp"

namespace szilard::app {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// Raised when a finished run breaks a property that must always hold.
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { kIdeal, kPulse };
enum class OutputFormat { kJson, kCsv, kBoth };

inline const char* mode_name(Mode m) { return m == Mode::kIdeal ? "ideal" : "pulse"; }

inline const char* format_name(OutputFormat f) {
  switch (f) {
    case OutputFormat::kJson: return "json";
    case OutputFormat::kCsv: return "csv";
    case OutputFormat::kBoth: return "both";
  }
  return "?";
}

struct McSettings {
  bool enabled = false;
  std::size_t n_samples = 400;
  metrology::NoiseModel noise = metrology::calibrated_noise();

  bool operator==(const McSettings& o) const {
    return enabled == o.enabled && n_samples == o.n_samples && noise.amplitude_jitter == o.noise.amplitude_jitter &&
           noise.phase_jitter == o.noise.phase_jitter && noise.gradient_jitter == o.noise.gradient_jitter &&
           noise.readout_noise == o.noise.readout_noise && noise.relaxation == o.noise.relaxation;
  }
};

struct ExperimentConfig {
  engine::Variant variant = engine::Variant::kA;
  double kT = 1.33;        // peV
  double omega = 2000.0;   // rad/s
  Mode mode = Mode::kIdeal;
  std::string molecule;    // molecule file, pulse mode only
  std::string pulse_dir;   // precompiled pulses for the kT-independent gates
  bool relaxation = false;
  std::optional<std::uint64_t> shots;  // nullopt: exact tomography
  McSettings mc;
  std::uint64_t seed = 1;
  std::string out = "szilard_run";
  OutputFormat format = OutputFormat::kBoth;

  bool operator==(const ExperimentConfig&) const = default;

  engine::EngineParams params() const {
    engine::EngineParams p;
    p.omega = omega;
    p.kT = kT;
    return p;
  }

  /// Field names in errors are the config keys.
  void validate() const {
    if (!(kT > 0.0) || !std::isfinite(kT)) throw ConfigError("experiment.kT", 0, "must be a positive number of peV");
    if (!(omega > 0.0) || !std::isfinite(omega)) throw ConfigError("experiment.omega", 0, "must be positive (rad/s)");
    if (mode == Mode::kPulse && molecule.empty()) {
      throw ConfigError("experiment.molecule", 0, "pulse mode needs a molecule file");
    }
    if (shots && *shots == 0) throw ConfigError("experiment.shots", 0, "must be positive or 'exact'");
    if (mc.enabled && mc.n_samples < 2) throw ConfigError("mc.n_samples", 0, "must be at least 2");
    const std::pair<const char*, double> noise[] = {{"mc.amplitude_jitter", mc.noise.amplitude_jitter},
                                                    {"mc.phase_jitter", mc.noise.phase_jitter},
                                                    {"mc.gradient_jitter", mc.noise.gradient_jitter},
                                                    {"mc.readout_noise", mc.noise.readout_noise}};
    for (const auto& [name, v] : noise) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(name, 0, "must be a non-negative number");
    }
    if (out.empty()) throw ConfigError("output.path", 0, "must not be empty");
  }
};

// ---------------------------------------------------------------------------
// Parsing helpers shared by the config file and command-line overrides.

inline engine::Variant parse_variant_field(const std::string& field, const std::string& v, std::size_t line = 0) {
  if (auto r = engine::parse_variant(v)) return *r;
  throw ConfigError(field, line, "expected one of a, b, c, d; got '" + v + "'");
}

inline Mode parse_mode_field(const std::string& field, const std::string& v, std::size_t line = 0) {
  if (v == "ideal") return Mode::kIdeal;
  if (v == "pulse") return Mode::kPulse;
  throw ConfigError(field, line, "expected ideal or pulse; got '" + v + "'");
}

inline OutputFormat parse_format_field(const std::string& field, const std::string& v, std::size_t line = 0) {
  if (v == "json") return OutputFormat::kJson;
  if (v == "csv") return OutputFormat::kCsv;
  if (v == "both") return OutputFormat::kBoth;
  throw ConfigError(field, line, "expected json, csv or both; got '" + v + "'");
}

inline bool parse_switch_field(const std::string& field, const std::string& v, std::size_t line = 0) {
  if (v == "on" || v == "true" || v == "yes" || v == "1") return true;
  if (v == "off" || v == "false" || v == "no" || v == "0") return false;
  throw ConfigError(field, line, "expected on or off; got '" + v + "'");
}

inline std::optional<std::uint64_t> parse_shots_field(const std::string& field, const std::string& v,
                                                      std::size_t line = 0) {
  if (v == "exact") return std::nullopt;
  const auto n = parse_integer(v);
  if (!n || *n <= 0) throw ConfigError(field, line, "expected a positive integer or 'exact'; got '" + v + "'");
  return static_cast<std::uint64_t>(*n);
}

inline double parse_number_field(const std::string& field, const std::string& v, std::size_t line = 0) {
  const auto d = parse_double(v);
  if (!d) throw ConfigError(field, line, "expected a number; got '" + v + "'");
  return *d;
}

inline std::uint64_t parse_count_field(const std::string& field, const std::string& v, std::size_t line = 0) {
  const auto n = parse_integer(v);
  if (!n || *n < 0) throw ConfigError(field, line, "expected a non-negative integer; got '" + v + "'");
  return static_cast<std::uint64_t>(*n);
}

/// Applies one `section.key = value` setting.
inline void apply_setting(ExperimentConfig& c, const std::string& key, const std::string& v, std::size_t line = 0) {
  auto number = [&] {
    const double d = parse_number_field(key, v, line);
    return d;
  };
  auto non_negative = [&] {
    const double d = number();
    if (!(d >= 0.0)) throw ConfigError(key, line, "must be non-negative");
    return d;
  };
  if (key == "experiment.variant") {
    c.variant = parse_variant_field(key, v, line);
  } else if (key == "experiment.kT") {
    c.kT = number();
    if (!(c.kT > 0.0) || !std::isfinite(c.kT)) throw ConfigError(key, line, "must be a positive number of peV");
  } else if (key == "experiment.omega") {
    c.omega = number();
    if (!(c.omega > 0.0) || !std::isfinite(c.omega)) throw ConfigError(key, line, "must be positive (rad/s)");
  } else if (key == "experiment.mode") {
    c.mode = parse_mode_field(key, v, line);
  } else if (key == "experiment.molecule") {
    c.molecule = v;
  } else if (key == "experiment.pulse_dir") {
    c.pulse_dir = v;
  } else if (key == "experiment.relaxation") {
    c.relaxation = parse_switch_field(key, v, line);
  } else if (key == "experiment.shots") {
    c.shots = parse_shots_field(key, v, line);
  } else if (key == "experiment.seed") {
    c.seed = parse_count_field(key, v, line);
  } else if (key == "mc.enabled") {
    c.mc.enabled = parse_switch_field(key, v, line);
  } else if (key == "mc.n_samples") {
    c.mc.n_samples = parse_count_field(key, v, line);
    if (c.mc.n_samples < 2) throw ConfigError(key, line, "must be at least 2");
  } else if (key == "mc.amplitude_jitter") {
    c.mc.noise.amplitude_jitter = non_negative();
  } else if (key == "mc.phase_jitter") {
    c.mc.noise.phase_jitter = non_negative();
  } else if (key == "mc.gradient_jitter") {
    c.mc.noise.gradient_jitter = non_negative();
  } else if (key == "mc.readout_noise") {
    c.mc.noise.readout_noise = non_negative();
  } else if (key == "mc.relaxation") {
    c.mc.noise.relaxation = parse_switch_field(key, v, line);
  } else if (key == "output.path") {
    c.out = v;
  } else if (key == "output.format") {
    c.format = parse_format_field(key, v, line);
  } else {
    throw ConfigError(key, line, "unknown key");
  }
}

/// Reads an experiment config. Keys under [sweep] are left for
/// sweep_temperatures; anything else unknown is an error.
inline ExperimentConfig load_experiment(const KeyValueFile& kv, ExperimentConfig c = {}) {
  for (const auto& key : kv.keys()) {
    if (key.rfind("sweep.", 0) == 0) continue;
    const auto* e = kv.find(key);
    apply_setting(c, key, e->value, e->line);
  }
  return c;
}

/// Parses "a, b, c" or "start:stop:count" (inclusive, linear).
inline std::vector<double> parse_temperature_list(const std::string& field, const std::string& text,
                                                  std::size_t line = 0) {
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
      const auto next = text.find(':', pos);
      parts.push_back(text.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
      if (next == std::string::npos) break;
      pos = next + 1;
    }
    if (parts.size() != 3) throw ConfigError(field, line, "range must be start:stop:count");
    const double a = parse_number_field(field, parts[0], line);
    const double b = parse_number_field(field, parts[1], line);
    const auto n = parse_integer(parts[2]);
    if (!n || *n < 1) throw ConfigError(field, line, "range count must be a positive integer");
    for (long long i = 0; i < *n; ++i) {
      out.push_back(*n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(*n - 1));
    }
  } else {
    std::string token;
    auto flush = [&] {
      const auto t = std::string(detail::trim(token));
      token.clear();
      if (t.empty()) return;
      out.push_back(parse_number_field(field, t, line));
    };
    for (char ch : text) {
      if (ch == ',' || ch == ' ' || ch == '\t') {
        flush();
      } else {
        token.push_back(ch);
      }
    }
    flush();
  }
  if (out.empty()) throw ConfigError(field, line, "temperature list is empty");
  for (double t : out) {
    if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError(field, line, "temperatures must be positive");
  }
  return out;
}

inline std::optional<std::vector<double>> sweep_temperatures(const KeyValueFile& kv) {
  const auto* e = kv.find("sweep.kT");
  for (const auto& key : kv.keys()) {
    if (key.rfind("sweep.", 0) == 0 && key != "sweep.kT") throw ConfigError(key, kv.line_of(key), "unknown key");
  }
  if (e == nullptr) return std::nullopt;
  return parse_temperature_list("sweep.kT", e->value, e->line);
}

// ---------------------------------------------------------------------------
// Report.

struct QubitReport {
  std::array<double, 3> bloch{};
  double energy = 0.0;             // from the tomographic state, peV
  double fidelity_vs_ideal = 0.0;  // Uhlmann fidelity against the ideal-mode state

  bool operator==(const QubitReport&) const = default;
};

struct StepReport {
  engine::Step step = engine::Step::kInit;
  std::array<double, engine::kRegisterSize> energy{};   // peV
  std::array<double, engine::kRegisterSize> entropy{};  // nats
  std::array<double, engine::kRegisterSize> theory{};   // peV
  std::array<QubitReport, engine::kRegisterSize> tomography{};
  std::optional<std::array<double, engine::kRegisterSize>> mc_mean;
  std::optional<std::array<double, engine::kRegisterSize>> errbar;

  bool operator==(const StepReport&) const = default;
};

struct LedgerSummary {
  double heat_extracted = 0.0;
  double weight_work_gain = 0.0;
  double measurement_memory_drop = 0.0;
  double erasure_cost = 0.0;
  double erasure_cost_closed_form = 0.0;
  double entropy_variation_weight_nats = 0.0;
  double entropy_variation_weight = 0.0;  // kT * dS, peV

  bool operator==(const LedgerSummary&) const = default;
};

struct Stat {
  double mean = 0.0;
  double std = 0.0;
  bool operator==(const Stat&) const = default;
};

struct McSummary {
  std::size_t n_samples = 0;
  Stat erasure_cost;
  Stat weight_work_gain;
  Stat measurement_memory_drop;
  Stat entropy_variation_weight;
  Stat entropy_variation_weight_nats;

  bool operator==(const McSummary&) const = default;
};

struct GateReport {
  std::string label;
  double fidelity = 0.0;
  double duration = 0.0;  // s
  std::size_t segments = 0;

  bool operator==(const GateReport&) const = default;
};

struct PulseSummary {
  double sequence_duration = 0.0;  // s
  std::vector<GateReport> gates;
  bool operator==(const PulseSummary&) const = default;
};

struct RunReport {
  int schema_version = kSchemaVersion;
  ExperimentConfig config;
  std::vector<StepReport> steps;
  LedgerSummary ledger;
  double min_tomography_fidelity = 1.0;
  std::optional<McSummary> mc;
  std::optional<PulseSummary> pulses;
  double wall_time = 0.0;  // s

  bool operator==(const RunReport&) const = default;
};

// ---------------------------------------------------------------------------
// JSON.

inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["variant"] = engine::variant_name(c.variant);
  j["kT_peV"] = c.kT;
  j["omega_rad_s"] = c.omega;
  j["mode"] = mode_name(c.mode);
  j["molecule"] = c.molecule;
  j["pulse_dir"] = c.pulse_dir;
  j["relaxation"] = c.relaxation;
  if (c.shots) {
    j["shots"] = *c.shots;
  } else {
    j["shots"] = "exact";
  }
  j["seed"] = c.seed;
  j["mc"] = {{"enabled", c.mc.enabled},
             {"n_samples", c.mc.n_samples},
             {"amplitude_jitter", c.mc.noise.amplitude_jitter},
             {"phase_jitter", c.mc.noise.phase_jitter},
             {"gradient_jitter", c.mc.noise.gradient_jitter},
             {"readout_noise", c.mc.noise.readout_noise},
             {"relaxation", c.mc.noise.relaxation}};
  j["output"] = {{"path", c.out}, {"format", format_name(c.format)}};
  return j;
}

inline ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  c.variant = parse_variant_field("variant", j.at("variant").get<std::string>());
  c.kT = j.at("kT_peV").get<double>();
  c.omega = j.at("omega_rad_s").get<double>();
  c.mode = parse_mode_field("mode", j.at("mode").get<std::string>());
  c.molecule = j.at("molecule").get<std::string>();
  c.pulse_dir = j.at("pulse_dir").get<std::string>();
  c.relaxation = j.at("relaxation").get<bool>();
  if (j.at("shots").is_string()) {
    c.shots.reset();
  } else {
    c.shots = j.at("shots").get<std::uint64_t>();
  }
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& mc = j.at("mc");
  c.mc.enabled = mc.at("enabled").get<bool>();
  c.mc.n_samples = mc.at("n_samples").get<std::size_t>();
  c.mc.noise.amplitude_jitter = mc.at("amplitude_jitter").get<double>();
  c.mc.noise.phase_jitter = mc.at("phase_jitter").get<double>();
  c.mc.noise.gradient_jitter = mc.at("gradient_jitter").get<double>();
  c.mc.noise.readout_noise = mc.at("readout_noise").get<double>();
  c.mc.noise.relaxation = mc.at("relaxation").get<bool>();
  c.out = j.at("output").at("path").get<std::string>();
  c.format = parse_format_field("format", j.at("output").at("format").get<std::string>());
  return c;
}

namespace detail {

inline Json by_role(const std::array<double, engine::kRegisterSize>& v) {
  Json j = Json::object();
  for (auto r : engine::kRoles) j[engine::role_name(r)] = v[engine::index(r)];
  return j;
}

inline std::array<double, engine::kRegisterSize> from_roles(const Json& j) {
  std::array<double, engine::kRegisterSize> out{};
  for (auto r : engine::kRoles) out[engine::index(r)] = j.at(engine::role_name(r)).get<double>();
  return out;
}

inline engine::Step parse_step(const std::string& s) {
  for (auto st : engine::kSteps) {
    if (s == engine::step_name(st)) return st;
  }
  throw std::invalid_argument("unknown step '" + s + "'");
}

inline Json stat_json(const Stat& s) { return {{"mean", s.mean}, {"std", s.std}}; }
inline Stat stat_from(const Json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>()}; }

}  // namespace detail

inline Json to_json(const RunReport& r) {
  Json j;
  j["schema_version"] = r.schema_version;
  j["config"] = to_json(r.config);
  Json steps = Json::array();
  for (const auto& s : r.steps) {
    Json js;
    js["step"] = engine::step_name(s.step);
    js["energy_peV"] = detail::by_role(s.energy);
    js["entropy_nats"] = detail::by_role(s.entropy);
    js["theory_peV"] = detail::by_role(s.theory);
    Json tomo = Json::object();
    for (auto role : engine::kRoles) {
      const auto& q = s.tomography[engine::index(role)];
      tomo[engine::role_name(role)] = {{"bloch", q.bloch}, {"energy_peV", q.energy}, {"fidelity_vs_ideal", q.fidelity_vs_ideal}};
    }
    js["tomography"] = tomo;
    js["mc_mean_peV"] = s.mc_mean ? detail::by_role(*s.mc_mean) : Json(nullptr);
    js["errbar_peV"] = s.errbar ? detail::by_role(*s.errbar) : Json(nullptr);
    steps.push_back(std::move(js));
  }
  j["steps"] = std::move(steps);
  j["ledger"] = {{"heat_extracted_peV", r.ledger.heat_extracted},
                 {"weight_work_gain_peV", r.ledger.weight_work_gain},
                 {"measurement_memory_drop_peV", r.ledger.measurement_memory_drop},
                 {"erasure_cost_peV", r.ledger.erasure_cost},
                 {"erasure_cost_closed_form_peV", r.ledger.erasure_cost_closed_form},
                 {"entropy_variation_weight_nats", r.ledger.entropy_variation_weight_nats},
                 {"entropy_variation_weight_peV", r.ledger.entropy_variation_weight}};
  j["min_tomography_fidelity"] = r.min_tomography_fidelity;
  if (r.mc) {
    j["monte_carlo"] = {{"n_samples", r.mc->n_samples},
                        {"erasure_cost_peV", detail::stat_json(r.mc->erasure_cost)},
                        {"weight_work_gain_peV", detail::stat_json(r.mc->weight_work_gain)},
                        {"measurement_memory_drop_peV", detail::stat_json(r.mc->measurement_memory_drop)},
                        {"entropy_variation_weight_peV", detail::stat_json(r.mc->entropy_variation_weight)},
                        {"entropy_variation_weight_nats", detail::stat_json(r.mc->entropy_variation_weight_nats)}};
  } else {
    j["monte_carlo"] = nullptr;
  }
  if (r.pulses) {
    Json gates = Json::array();
    for (const auto& g : r.pulses->gates) {
      gates.push_back({{"label", g.label}, {"fidelity", g.fidelity}, {"duration_s", g.duration}, {"segments", g.segments}});
    }
    j["pulses"] = {{"sequence_duration_s", r.pulses->sequence_duration}, {"gates", std::move(gates)}};
  } else {
    j["pulses"] = nullptr;
  }
  j["wall_time_s"] = r.wall_time;
  return j;
}

inline RunReport report_from_json(const Json& j) {
  RunReport r;
  r.schema_version = j.at("schema_version").get<int>();
  if (r.schema_version != kSchemaVersion) {
    throw std::invalid_argument("unsupported report schema version " + std::to_string(r.schema_version));
  }
  r.config = config_from_json(j.at("config"));
  for (const auto& js : j.at("steps")) {
    StepReport s;
    s.step = detail::parse_step(js.at("step").get<std::string>());
    s.energy = detail::from_roles(js.at("energy_peV"));
    s.entropy = detail::from_roles(js.at("entropy_nats"));
    s.theory = detail::from_roles(js.at("theory_peV"));
    for (auto role : engine::kRoles) {
      const auto& q = js.at("tomography").at(engine::role_name(role));
      auto& out = s.tomography[engine::index(role)];
      out.bloch = q.at("bloch").get<std::array<double, 3>>();
      out.energy = q.at("energy_peV").get<double>();
      out.fidelity_vs_ideal = q.at("fidelity_vs_ideal").get<double>();
    }
    if (!js.at("mc_mean_peV").is_null()) s.mc_mean = detail::from_roles(js.at("mc_mean_peV"));
    if (!js.at("errbar_peV").is_null()) s.errbar = detail::from_roles(js.at("errbar_peV"));
    r.steps.push_back(s);
  }
  const auto& l = j.at("ledger");
  r.ledger.heat_extracted = l.at("heat_extracted_peV").get<double>();
  r.ledger.weight_work_gain = l.at("weight_work_gain_peV").get<double>();
  r.ledger.measurement_memory_drop = l.at("measurement_memory_drop_peV").get<double>();
  r.ledger.erasure_cost = l.at("erasure_cost_peV").get<double>();
  r.ledger.erasure_cost_closed_form = l.at("erasure_cost_closed_form_peV").get<double>();
  r.ledger.entropy_variation_weight_nats = l.at("entropy_variation_weight_nats").get<double>();
  r.ledger.entropy_variation_weight = l.at("entropy_variation_weight_peV").get<double>();
  r.min_tomography_fidelity = j.at("min_tomography_fidelity").get<double>();
  if (const auto& mc = j.at("monte_carlo"); !mc.is_null()) {
    McSummary m;
    m.n_samples = mc.at("n_samples").get<std::size_t>();
    m.erasure_cost = detail::stat_from(mc.at("erasure_cost_peV"));
    m.weight_work_gain = detail::stat_from(mc.at("weight_work_gain_peV"));
    m.measurement_memory_drop = detail::stat_from(mc.at("measurement_memory_drop_peV"));
    m.entropy_variation_weight = detail::stat_from(mc.at("entropy_variation_weight_peV"));
    m.entropy_variation_weight_nats = detail::stat_from(mc.at("entropy_variation_weight_nats"));
    r.mc = m;
  }
  if (const auto& p = j.at("pulses"); !p.is_null()) {
    PulseSummary ps;
    ps.sequence_duration = p.at("sequence_duration_s").get<double>();
    for (const auto& g : p.at("gates")) {
      ps.gates.push_back({g.at("label").get<std::string>(), g.at("fidelity").get<double>(),
                          g.at("duration_s").get<double>(), g.at("segments").get<std::size_t>()});
    }
    r.pulses = ps;
  }
  r.wall_time = j.at("wall_time_s").get<double>();
  return r;
}

// ---------------------------------------------------------------------------
// CSV.

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  // Avoid "-0.000000" so identical values print identically.
  if (std::string(buf) == "-0.000000") return "0.000000";
  return buf;
}

inline void write_energy_csv(std::ostream& out, const RunReport& r) {
  out << "step,subsystem,energy_peV,theory_peV,errbar_peV\n";
  for (const auto& s : r.steps) {
    for (auto role : engine::kRoles) {
      const auto q = engine::index(role);
      out << engine::step_name(s.step) << ',' << engine::role_name(role) << ',' << fixed6(s.energy[q]) << ','
          << fixed6(s.theory[q]) << ',' << (s.errbar ? fixed6((*s.errbar)[q]) : std::string()) << '\n';
    }
  }
}

inline void write_sweep_csv(std::ostream& out, const std::vector<RunReport>& reports) {
  out << "kT_peV,step,subsystem,energy_peV,theory_peV,errbar_peV,erasure_cost_peV,erasure_closed_form_peV\n";
  for (const auto& r : reports) {
    for (const auto& s : r.steps) {
      for (auto role : engine::kRoles) {
        const auto q = engine::index(role);
        out << fixed6(r.config.kT) << ',' << engine::step_name(s.step) << ',' << engine::role_name(role) << ','
            << fixed6(s.energy[q]) << ',' << fixed6(s.theory[q]) << ','
            << (s.errbar ? fixed6((*s.errbar)[q]) : std::string()) << ',' << fixed6(r.ledger.erasure_cost) << ','
            << fixed6(r.ledger.erasure_cost_closed_form) << '\n';
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Pulse preparation.

inline nmr::PulseSequence load_pulse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("experiment.pulse_dir", 0, "cannot open pulse file '" + path + "'");
  try {
    return nmr::read_pulse(in);
  } catch (const ConfigError& e) {
    throw ConfigError("experiment.pulse_dir", 0, "'" + path + "': " + e.what());
  }
}

inline void save_pulse_file(const std::string& path, const nmr::PulseSequence& p) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  nmr::write_pulse(out, p);
}

/// Keeps the kT-independent gates between runs on the same molecule. The
/// thermalization rotation depends on kT and is compiled per run.
class PulseCache {
 public:
  const nmr::MoleculeSpec& molecule(const std::string& path) {
    if (!molecule_ || path != molecule_path_) {
      try {
        molecule_ = nmr::load_molecule(path);
      } catch (const ConfigError& e) {
        throw ConfigError("experiment.molecule", 0, "'" + path + "': " + e.what());
      }
      molecule_path_ = path;
      shared_.reset();
    }
    return *molecule_;
  }

  engine::CompiledCycle cycle_for(const ExperimentConfig& c) {
    const auto& m = molecule(c.molecule);
    if (m.n_spins != engine::kRegisterSize) {
      throw ConfigError("experiment.molecule", 0, "the engine needs a 4-spin molecule");
    }
    const auto params = c.params();
    if (!shared_ || shared_dir_ != c.pulse_dir) {
      engine::CompiledCycle shared;
      if (!c.pulse_dir.empty()) {
        for (const auto& g : pulse::compilable_gates(params, false)) {
          const auto p = load_pulse_file((std::filesystem::path(c.pulse_dir) / (g.label + ".pulse")).string());
          shared.pulses[g.label] = p;
          shared.gate_fidelity[g.label] =
              pulse::gate_fidelity(nmr::pulse_unitary(nmr::SpinSystem(m), p), engine::build_unitary(g.spec));
        }
      } else {
        shared = pulse::compile_cycle(m, params, {}, false).cycle;
      }
      shared_ = std::move(shared);
      shared_dir_ = c.pulse_dir;
    }
    engine::CompiledCycle out = *shared_;
    if (engine::CycleConfig::for_variant(c.variant).thermalize) {
      const auto rx = pulse::compile_cycle(m, params, {}, true, {engine::kThermalizeRx}).cycle;
      for (const auto& [label, p] : rx.pulses) out.pulses[label] = p;
      for (const auto& [label, f] : rx.gate_fidelity) out.gate_fidelity[label] = f;
    }
    return out;
  }

 private:
  std::optional<nmr::MoleculeSpec> molecule_;
  std::string molecule_path_;
  std::optional<engine::CompiledCycle> shared_;
  std::string shared_dir_;
};

// ---------------------------------------------------------------------------
// Running.

namespace detail {

inline std::mt19937_64 tomography_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x746f6d6fu};
  return std::mt19937_64(seq);
}

inline bool finite_all(const std::array<double, engine::kRegisterSize>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace detail

/// Checks properties every report must satisfy; throws InvariantError.
inline void check_invariants(const RunReport& r) {
  if (r.steps.size() != engine::kSteps.size()) throw InvariantError("report does not cover every step");
  for (const auto& s : r.steps) {
    if (!detail::finite_all(s.energy) || !detail::finite_all(s.theory) || !detail::finite_all(s.entropy)) {
      throw InvariantError(std::string("non-finite value at step ") + engine::step_name(s.step));
    }
    const double e = r.config.params().hbar_omega();
    for (double v : s.energy) {
      if (std::abs(v) > e * (1.0 + 1e-9)) throw InvariantError("energy outside [-hbar*omega, hbar*omega]");
    }
    for (const auto& q : s.tomography) {
      if (!(q.fidelity_vs_ideal >= 0.0 && q.fidelity_vs_ideal <= 1.0 + 1e-12)) {
        throw InvariantError("tomography fidelity outside [0, 1]");
      }
    }
    if (r.config.mode == Mode::kIdeal) {
      for (std::size_t q = 0; q < engine::kRegisterSize; ++q) {
        if (std::abs(s.energy[q] - s.theory[q]) > 1e-9) {
          throw InvariantError(std::string("ideal energy departs from theory at step ") + engine::step_name(s.step));
        }
      }
    }
  }
}

/// Runs one experiment. `cache` may be shared across runs on one molecule.
inline RunReport run_experiment(const ExperimentConfig& config, PulseCache* cache = nullptr) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto params = config.params();
  const auto cycle = engine::CycleConfig::for_variant(config.variant);

  RunReport report;
  report.config = config;

  PulseCache local;
  PulseCache& pc = cache != nullptr ? *cache : local;
  std::optional<engine::CompiledCycle> compiled;
  std::optional<nmr::SpinSystem> system;
  engine::Backend backend = engine::IdealBackend{};
  if (config.mode == Mode::kPulse) {
    compiled = pc.cycle_for(config);
    system.emplace(pc.molecule(config.molecule));
    backend = engine::PulseBackend{&*system, &*compiled,
                                   config.relaxation ? nmr::Relaxation::kOn : nmr::Relaxation::kOff};
    PulseSummary ps;
    for (const auto& step : engine::engine_circuit(cycle, params)) {
      for (const auto& g : step.gates) {
        const auto it = compiled->pulses.find(g.label);
        if (it == compiled->pulses.end()) continue;
        ps.gates.push_back({g.label, compiled->gate_fidelity.at(g.label), it->second.total_duration(),
                            it->second.segments.size()});
        ps.sequence_duration += it->second.total_duration();
      }
    }
    report.pulses = ps;
  }

  const auto ledger = engine::run_cycle(cycle, params, backend);
  const auto ideal = config.mode == Mode::kIdeal ? ledger : engine::run_cycle(cycle, params);
  const auto theory = engine::theory_table(cycle, params);

  auto rng = detail::tomography_rng(config.seed);
  for (std::size_t st = 0; st < engine::kSteps.size(); ++st) {
    StepReport s;
    s.step = engine::kSteps[st];
    s.energy = ledger.steps[st].energy;
    s.entropy = ledger.steps[st].entropy;
    s.theory = theory[st];
    for (std::size_t q = 0; q < engine::kRegisterSize; ++q) {
      const auto tomo = metrology::tomograph_qubit(ledger.steps[st].state, q,
                                                   metrology::TomographySettings{config.shots, 0.0}, rng);
      auto& out = s.tomography[q];
      out.bloch = tomo.bloch;
      out.energy = metrology::energy_of(tomo.state, params);
      out.fidelity_vs_ideal = fidelity(tomo.state, reduced_qubit(ideal.steps[st].state, q));
      report.min_tomography_fidelity = std::min(report.min_tomography_fidelity, out.fidelity_vs_ideal);
    }
    report.steps.push_back(s);
  }

  report.ledger.heat_extracted = ledger.heat_extracted();
  report.ledger.weight_work_gain = ledger.weight_work_gain();
  report.ledger.measurement_memory_drop = ledger.measurement_memory_drop();
  report.ledger.erasure_cost = ledger.erasure_cost();
  report.ledger.erasure_cost_closed_form = engine::erasure_cost_closed_form(params);
  report.ledger.entropy_variation_weight_nats = ledger.entropy_variation_weight_nats();
  report.ledger.entropy_variation_weight = ledger.entropy_variation_weight_feedback();

  if (config.mc.enabled) {
    auto noise = config.mc.noise;
    if (config.relaxation) noise.relaxation = true;
    const auto mc = metrology::monte_carlo_errorbars(cycle, params, backend, noise, config.mc.n_samples, config.seed);
    for (std::size_t st = 0; st < engine::kSteps.size(); ++st) {
      std::array<double, engine::kRegisterSize> mean{}, err{};
      for (std::size_t q = 0; q < engine::kRegisterSize; ++q) {
        mean[q] = mc.energy[st][q].mean;
        err[q] = mc.energy[st][q].std;
      }
      report.steps[st].mc_mean = mean;
      report.steps[st].errbar = err;
    }
    McSummary m;
    m.n_samples = config.mc.n_samples;
    m.erasure_cost = {mc.erasure_cost.mean, mc.erasure_cost.std};
    m.weight_work_gain = {mc.weight_work_gain.mean, mc.weight_work_gain.std};
    m.measurement_memory_drop = {mc.measurement_memory_drop.mean, mc.measurement_memory_drop.std};
    m.entropy_variation_weight = {mc.entropy_variation_weight_feedback.mean, mc.entropy_variation_weight_feedback.std};
    m.entropy_variation_weight_nats = {mc.entropy_variation_weight_nats.mean, mc.entropy_variation_weight_nats.std};
    report.mc = m;
  }

  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  check_invariants(report);
  return report;
}

inline std::vector<RunReport> run_sweep(const ExperimentConfig& base, const std::vector<double>& temperatures,
                                        PulseCache* cache = nullptr) {
  if (temperatures.empty()) throw ConfigError("sweep.kT", 0, "temperature list is empty");
  PulseCache local;
  std::vector<RunReport> out;
  for (double t : temperatures) {
    ExperimentConfig c = base;
    c.kT = t;
    out.push_back(run_experiment(c, cache != nullptr ? cache : &local));
  }
  return out;
}

/// Writes <out>.json and/or <out>.csv according to the configured format.
inline std::vector<std::string> write_outputs(const RunReport& r) {
  std::vector<std::string> written;
  const std::filesystem::path base(r.config.out);
  if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
  if (r.config.format != OutputFormat::kCsv) {
    const std::string path = r.config.out + ".json";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << to_json(r).dump(2) << '\n';
    written.push_back(path);
  }
  if (r.config.format != OutputFormat::kJson) {
    const std::string path = r.config.out + ".csv";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    write_energy_csv(out, r);
    written.push_back(path);
  }
  return written;
}

inline std::vector<std::string> write_sweep_outputs(const std::vector<RunReport>& reports) {
  std::vector<std::string> written;
  if (reports.empty()) return written;
  const auto& c = reports.front().config;
  const std::filesystem::path base(c.out);
  if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
  if (c.format != OutputFormat::kCsv) {
    const std::string path = c.out + ".json";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    Json runs = Json::array();
    for (const auto& r : reports) runs.push_back(to_json(r));
    out << Json{{"schema_version", kSchemaVersion}, {"runs", std::move(runs)}}.dump(2) << '\n';
    written.push_back(path);
  }
  if (c.format != OutputFormat::kJson) {
    const std::string path = c.out + ".csv";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    write_sweep_csv(out, reports);
    written.push_back(path);
  }
  return written;
}

// ---------------------------------------------------------------------------
// Standalone pulse compilation.

struct CompileRequest {
  std::string molecule;
  std::vector<std::string> gates;  // empty: every cycle gate
  double kT = 1.33;                // sets the thermalization angle
  double omega = 2000.0;
  std::optional<double> duration;  // s
  std::optional<long long> n_segments;
  std::optional<double> amp_limit_hz;
  std::optional<double> fidelity_goal;
  std::optional<double> exposure_weight;
  std::optional<long long> max_iterations;
  std::uint64_t seed = 1;
  std::string out_dir = "pulses";
};

struct CompiledGateSummary {
  std::string label;
  double fidelity = 0.0;
  double duration = 0.0;
  std::size_t segments = 0;
  double exposure = 0.0;
  bool converged = false;
};

struct CompileSummary {
  std::vector<CompiledGateSummary> gates;
  double total_duration = 0.0;
  std::vector<std::string> failed;
};

/// Label "identity" compiles the identity on the whole molecule.
inline constexpr const char* kIdentityGate = "identity";

inline pulse::GateSettings apply_overrides(pulse::GateSettings s, const CompileRequest& req) {
  if (req.duration) {
    if (!(*req.duration > 0.0)) throw ConfigError("duration", 0, "must be positive");
    const auto n = s.n_segments();
    s.duration = *req.duration;
    if (!req.n_segments && n > 0) s.segment_duration = s.duration / static_cast<double>(n);
  }
  if (req.n_segments) {
    if (*req.n_segments <= 0) throw ConfigError("n_segments", 0, "must be a positive integer");
    s.segment_duration = s.duration / static_cast<double>(*req.n_segments);
  }
  if (req.amp_limit_hz) {
    if (!(*req.amp_limit_hz > 0.0)) throw ConfigError("amp_limit", 0, "must be positive");
    s.amp_limit = 2.0 * std::numbers::pi * *req.amp_limit_hz;
  }
  if (req.fidelity_goal) {
    if (!(*req.fidelity_goal > 0.0 && *req.fidelity_goal <= 1.0)) throw ConfigError("fidelity_goal", 0, "must be in (0, 1]");
    s.fidelity_goal = *req.fidelity_goal;
    s.stop_fidelity = std::max(s.stop_fidelity, s.fidelity_goal);
  }
  if (req.exposure_weight) {
    if (!(*req.exposure_weight >= 0.0)) throw ConfigError("exposure_weight", 0, "must be non-negative");
    s.exposure_weight = *req.exposure_weight;
  }
  if (req.max_iterations) {
    if (*req.max_iterations <= 0) throw ConfigError("max_iterations", 0, "must be a positive integer");
    s.max_iterations = static_cast<std::size_t>(*req.max_iterations);
  }
  s.seed = req.seed;
  return s;
}

/// Compiles the requested gates and writes <out_dir>/<label>.pulse for each
/// plus summary.csv. Gates below their goal are listed in `failed`; their
/// best pulses are still written.
inline CompileSummary compile_pulses(const CompileRequest& req) {
  if (req.molecule.empty()) throw ConfigError("molecule", 0, "a molecule file is required");
  if (req.n_segments && *req.n_segments <= 0) throw ConfigError("n_segments", 0, "must be a positive integer");
  nmr::MoleculeSpec m;
  try {
    m = nmr::load_molecule(req.molecule);
  } catch (const ConfigError& e) {
    throw ConfigError("molecule", 0, "'" + req.molecule + "': " + e.what());
  }
  engine::EngineParams params;
  params.kT = req.kT;
  params.omega = req.omega;
  if (!(req.kT > 0.0)) throw ConfigError("kT", 0, "must be a positive number of peV");

  std::vector<std::pair<std::string, std::optional<engine::CircuitGate>>> jobs;
  const auto cycle_gates = m.n_spins == engine::kRegisterSize ? pulse::compilable_gates(params, true)
                                                              : std::vector<engine::CircuitGate>{};
  if (req.gates.empty()) {
    if (cycle_gates.empty()) throw ConfigError("gates", 0, "cycle gates need a 4-spin molecule; name gates explicitly");
    for (const auto& g : cycle_gates) jobs.emplace_back(g.label, g);
  } else {
    for (const auto& label : req.gates) {
      if (label == kIdentityGate) {
        jobs.emplace_back(label, std::nullopt);
        continue;
      }
      const auto it = std::find_if(cycle_gates.begin(), cycle_gates.end(), [&](const auto& g) { return g.label == label; });
      if (it == cycle_gates.end()) throw ConfigError("gates", 0, "unknown gate '" + label + "'");
      jobs.emplace_back(label, *it);
    }
  }

  std::filesystem::create_directories(req.out_dir);
  CompileSummary summary;
  for (const auto& [label, gate] : jobs) {
    pulse::GateSettings s;
    UnitaryOp target = UnitaryOp::identity(m.dim());
    if (gate) {
      s = pulse::default_gate_settings(*gate, m);
      target = engine::build_unitary(gate->spec, m.n_spins);
    } else {
      s.duration = 5e-3;
      s.segment_duration = 2e-4;
      s.amp_limit = 2.0 * std::numbers::pi * 2500.0;
      s.n_starts = 4;
      s.max_iterations = 1500;
    }
    s = apply_overrides(s, req);
    if (s.n_segments() == 0) throw ConfigError("n_segments", 0, "must be a positive integer");
    const auto report = pulse::compile_gate(m, target, s);
    save_pulse_file((std::filesystem::path(req.out_dir) / (label + ".pulse")).string(), report.pulse);
    summary.gates.push_back({label, report.achieved_fidelity, report.pulse.total_duration(), report.pulse.segments.size(),
                             report.exposure, report.converged});
    summary.total_duration += report.pulse.total_duration();
    if (!report.converged) summary.failed.push_back(label);
  }

  std::ofstream csv(std::filesystem::path(req.out_dir) / "summary.csv");
  csv << "gate,fidelity,duration_s,segments,exposure,converged\n";
  for (const auto& g : summary.gates) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", g.fidelity);
    csv << g.label << ',' << buf << ',' << format_double(g.duration) << ',' << g.segments << ',' << fixed6(g.exposure)
        << ',' << (g.converged ? "yes" : "no") << '\n';
  }
  csv << "total,," << format_double(summary.total_duration) << ",,,\n";
  return summary;
}

// ---------------------------------------------------------------------------
// Self-test: closed-form oracles plus the pinned noise calibration.

inline bool run_selftest(std::ostream& out) {
  bool all = true;
  auto report = [&](const std::string& name, bool ok, const std::string& detail) {
    out << (ok ? "PASS " : "FAIL ") << name << "  " << detail << '\n';
    all = all && ok;
  };
  auto num = [](double v) { return format_double(v); };

  const auto cycle = engine::CycleConfig::for_variant(engine::Variant::kA);
  for (double kT : {1.33, 2.51, 10.91}) {
    engine::EngineParams p;
    p.kT = kT;
    const auto l = engine::run_cycle(cycle, p);
    const double closed = engine::erasure_cost_closed_form(p);
    report("erasure_cost kT=" + num(kT), std::abs(l.erasure_cost() - closed) < 1e-9,
           "ledger " + num(l.erasure_cost()) + " closed form " + num(closed));
    report("weight_gain kT=" + num(kT), std::abs(l.weight_work_gain() - p.gap()) < 1e-9,
           "ledger " + num(l.weight_work_gain()) + " expected " + num(p.gap()));
    report("weight_entropy kT=" + num(kT), std::abs(l.entropy_variation_weight_nats()) < 1e-9,
           "dS " + num(l.entropy_variation_weight_nats()) + " nats");
    report("memory_drop kT=" + num(kT), std::abs(l.measurement_memory_drop() - closed) < 1e-9,
           "ledger " + num(l.measurement_memory_drop()));
  }

  std::mt19937_64 rng(20260101);
  std::uniform_real_distribution<double> temp(0.1, 100.0);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    engine::EngineParams p;
    p.kT = temp(rng);
    const auto l = engine::run_cycle(cycle, p);
    const auto t = engine::theoretical_energy_trace(cycle, p);
    for (std::size_t st = 0; st < engine::kSteps.size(); ++st) {
      for (std::size_t q = 0; q < engine::kRegisterSize; ++q) worst = std::max(worst, std::abs(l.steps[st].energy[q] - t[st][q]));
    }
  }
  report("theory_trace random kT", worst < 1e-9, "max deviation " + num(worst) + " peV");

  {
    engine::EngineParams p;
    p.kT = 1.33;
    const auto d = engine::CycleConfig::for_variant(engine::Variant::kD);
    const auto l = engine::run_cycle(d, p);
    double drift = 0.0;
    for (const auto& s : l.steps) {
      for (std::size_t q = 0; q < engine::kRegisterSize; ++q) drift = std::max(drift, std::abs(s.energy[q] - l.steps[0].energy[q]));
    }
    report("variant_d isolation", drift < 1e-9, "max drift " + num(drift) + " peV");
  }

  {
    engine::EngineParams p;
    p.kT = 1e4;
    const double e = engine::erasure_cost_closed_form(p);
    report("high_temperature limit", std::abs(e - p.hbar_omega()) < 1e-3, "erasure " + num(e) + " peV");
  }

  {
    engine::EngineParams p;
    p.kT = 1.33;
    const auto mc = metrology::monte_carlo_errorbars(cycle, p, engine::IdealBackend{}, metrology::calibrated_noise(), 200, 7);
    const double lo = mc.min_energy_std(), hi = mc.max_energy_std();
    report("mc calibration", lo >= 0.05 && hi <= 0.15, "error bars in [" + num(lo) + ", " + num(hi) + "] peV");
  }
  return all;
}

}  // namespace szilard::app
