#include "atobs/config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <vector>

#include "atobs/errors.hpp"

namespace atobs {
namespace {

using nlohmann::json;

// Reads a rectangular nested array of numbers ([[..],[..]]) and reports the
// section path plus row index on any shape or type problem.
Mat mat_from_config(const json& j, const std::string& path) {
  if (!j.is_array()) {
    throw ConfigError("config: " + path + " must be a nested array of numbers");
  }
  const Index rows = static_cast<Index>(j.size());
  if (rows == 0) return Mat(0, 0);
  Index cols = -1;
  Mat m;
  for (Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<size_t>(i)];
    if (!row.is_array()) {
      throw ConfigError("config: " + path + " row " + std::to_string(i + 1) +
                        " is not an array");
    }
    if (cols < 0) {
      cols = static_cast<Index>(row.size());
      m.resize(rows, cols);
    }
    if (static_cast<Index>(row.size()) != cols) {
      throw ConfigError("config: " + path + " row " + std::to_string(i + 1) + " has " +
                        std::to_string(row.size()) + " entries, expected " +
                        std::to_string(cols));
    }
    for (Index k = 0; k < cols; ++k) {
      const json& cell = row[static_cast<size_t>(k)];
      if (!cell.is_number()) {
        throw ConfigError("config: " + path + " row " + std::to_string(i + 1) + ", column " +
                          std::to_string(k + 1) + " is not a number");
      }
      m(i, k) = cell.get<double>();
    }
  }
  return m;
}

// Flat array of numbers; used for initial states and gain vectors.
Vec vec_from_config(const json& j, const std::string& path) {
  if (!j.is_array()) {
    throw ConfigError("config: " + path + " must be an array of numbers");
  }
  Vec v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) {
    const json& cell = j[static_cast<size_t>(i)];
    if (!cell.is_number()) {
      throw ConfigError("config: " + path + " entry " + std::to_string(i + 1) +
                        " is not a number");
    }
    v(i) = cell.get<double>();
  }
  return v;
}

// Pole lists accept plain reals and [re, im] pairs.
std::vector<Complex> poles_from_config(const json& j, const std::string& path) {
  if (!j.is_array()) {
    throw ConfigError("config: " + path + " must be an array of poles");
  }
  std::vector<Complex> poles;
  poles.reserve(j.size());
  for (size_t i = 0; i < j.size(); ++i) {
    const json& entry = j[i];
    if (entry.is_number()) {
      poles.emplace_back(entry.get<double>(), 0.0);
    } else if (entry.is_array() && entry.size() == 2 && entry[0].is_number() &&
               entry[1].is_number()) {
      poles.emplace_back(entry[0].get<double>(), entry[1].get<double>());
    } else {
      throw ConfigError("config: " + path + " entry " + std::to_string(i + 1) +
                        " must be a number or a [re, im] pair");
    }
  }
  return poles;
}

double number_at(const json& section, const std::string& key, const std::string& path,
                 double fallback) {
  if (!section.contains(key)) return fallback;
  if (!section.at(key).is_number()) {
    throw ConfigError("config: " + path + "." + key + " must be a number");
  }
  return section.at(key).get<double>();
}

std::uint64_t seed_at(const json& section, const std::string& path, std::uint64_t fallback) {
  if (!section.contains("seed")) return fallback;
  if (!section.at("seed").is_number_unsigned()) {
    throw ConfigError("config: " + path + ".seed must be a nonnegative integer");
  }
  return section.at("seed").get<std::uint64_t>();
}

std::string string_at(const json& section, const std::string& key, const std::string& path) {
  if (!section.at(key).is_string()) {
    throw ConfigError("config: " + path + "." + key + " must be a string");
  }
  return section.at(key).get<std::string>();
}

LtiSystem system_from_config(const json& sec) {
  if (!sec.contains("A") || !sec.contains("C")) {
    throw ConfigError("config: system needs at least matrices A and C");
  }
  const Mat a = mat_from_config(sec.at("A"), "system.A");
  const Mat c = mat_from_config(sec.at("C"), "system.C");
  const Index n = a.rows();
  const Index m = c.rows();

  Mat b = sec.contains("B") ? mat_from_config(sec.at("B"), "system.B") : Mat::Zero(n, 0);
  if (b.size() == 0) b = Mat::Zero(n, b.cols());
  Mat e = sec.contains("E") ? mat_from_config(sec.at("E"), "system.E") : Mat::Zero(n, 0);
  if (e.size() == 0) e = Mat::Zero(n, e.cols());
  Mat d = sec.contains("D") ? mat_from_config(sec.at("D"), "system.D") : Mat::Zero(m, b.cols());
  if (d.size() == 0) d = Mat::Zero(m, b.cols());
  Mat f = sec.contains("F") ? mat_from_config(sec.at("F"), "system.F") : Mat::Zero(m, e.cols());
  if (f.size() == 0) f = Mat::Zero(m, e.cols());

  try {
    return LtiSystem(a, b, e, c, d, f);
  } catch (const ConfigError& ex) {
    throw ConfigError(std::string("config: system section is inconsistent: ") + ex.what());
  }
}

SynthesisConfig synthesis_from_config(const json& sec) {
  SynthesisConfig cfg;
  cfg.tau = number_at(sec, "tau", "synthesis", cfg.tau);
  cfg.sigma = number_at(sec, "sigma", "synthesis", cfg.sigma);
  if (sec.contains("branch1_poles")) {
    cfg.branch1_poles = poles_from_config(sec.at("branch1_poles"), "synthesis.branch1_poles");
  }
  if (sec.contains("branch2_poles")) {
    cfg.branch2_poles = poles_from_config(sec.at("branch2_poles"), "synthesis.branch2_poles");
  }
  if (sec.contains("bar1_poles")) {
    cfg.bar1_poles = poles_from_config(sec.at("bar1_poles"), "synthesis.bar1_poles");
  }
  if (sec.contains("bar2_poles")) {
    cfg.bar2_poles = poles_from_config(sec.at("bar2_poles"), "synthesis.bar2_poles");
  }
  if (sec.contains("H1")) cfg.H1 = mat_from_config(sec.at("H1"), "synthesis.H1");
  if (sec.contains("H2")) cfg.H2 = mat_from_config(sec.at("H2"), "synthesis.H2");
  cfg.seed = seed_at(sec, "synthesis", cfg.seed);
  cfg.admissibility_margin =
      number_at(sec, "admissibility_margin", "synthesis", cfg.admissibility_margin);
  return cfg;
}

SignalSpec signal_from_config(const json& sec, const std::string& path) {
  SignalSpec spec;
  if (sec.contains("kind")) {
    spec.kind = signal_kind_from_string(string_at(sec, "kind", path));
  }
  if (sec.contains("dim")) {
    if (!sec.at("dim").is_number_integer()) {
      throw ConfigError("config: " + path + ".dim must be an integer");
    }
    spec.dim = sec.at("dim").get<Index>();
  }
  spec.amplitude = number_at(sec, "amplitude", path, spec.amplitude);
  spec.omega = number_at(sec, "omega", path, spec.omega);
  spec.phase = number_at(sec, "phase", path, spec.phase);
  spec.step_time = number_at(sec, "step_time", path, spec.step_time);
  spec.switch_interval = number_at(sec, "switch_interval", path, spec.switch_interval);
  spec.cutoff = number_at(sec, "cutoff", path, spec.cutoff);
  spec.sample_dt = number_at(sec, "sample_dt", path, spec.sample_dt);
  spec.seed = seed_at(sec, path, spec.seed);
  return spec;
}

SimConfig simulation_from_config(const json& sec) {
  SimConfig cfg;
  cfg.dt = number_at(sec, "dt", "simulation", cfg.dt);
  cfg.t_end = number_at(sec, "t_end", "simulation", cfg.t_end);
  cfg.tau = number_at(sec, "tau", "simulation", cfg.tau);
  if (sec.contains("x0")) cfg.x0 = vec_from_config(sec.at("x0"), "simulation.x0");
  if (sec.contains("observer_init")) {
    cfg.observer_init = vec_from_config(sec.at("observer_init"), "simulation.observer_init");
  }
  cfg.seed = seed_at(sec, "simulation", cfg.seed);
  return cfg;
}

}  // namespace

ToolConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");

  ToolConfig cfg;
  try {
    if (root.contains("system")) cfg.system = system_from_config(root.at("system"));
    if (root.contains("synthesis")) {
      const json& sec = root.at("synthesis");
      cfg.synthesis = synthesis_from_config(sec);
      if (sec.contains("kind")) cfg.kind = string_at(sec, "kind", "synthesis");
    }
    if (root.contains("signals")) {
      const json& sec = root.at("signals");
      if (sec.contains("u")) cfg.input_signal = signal_from_config(sec.at("u"), "signals.u");
      if (sec.contains("w")) cfg.unknown_signal = signal_from_config(sec.at("w"), "signals.w");
    }
    if (root.contains("simulation")) {
      cfg.simulation = simulation_from_config(root.at("simulation"));
    }
    if (root.contains("graph")) {
      const json& sec = root.at("graph");
      if (!sec.contains("adjacency")) {
        throw ConfigError("config: graph needs an adjacency matrix");
      }
      cfg.graph = DiGraph(mat_from_config(sec.at("adjacency"), "graph.adjacency"));
    }
    if (root.contains("consensus")) {
      const json& sec = root.at("consensus");
      if (sec.contains("x0")) cfg.swarm.x0 = mat_from_config(sec.at("x0"), "consensus.x0");
      if (sec.contains("observer0")) {
        cfg.swarm.observer0 = mat_from_config(sec.at("observer0"), "consensus.observer0");
      }
      if (sec.contains("rho0")) cfg.swarm.rho0 = vec_from_config(sec.at("rho0"), "consensus.rho0");
    }
    if (root.contains("realization")) {
      if (!root.at("realization").is_string()) {
        throw ConfigError("config: realization must be a file path string");
      }
      cfg.realization_path = root.at("realization").get<std::string>();
    }
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  return cfg;
}

ToolConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace atobs
