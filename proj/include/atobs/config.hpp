#pragma once

#include <optional>
#include <string>

#include "atobs/consensus.hpp"
#include "atobs/sim.hpp"
#include "atobs/synth.hpp"
#include "atobs/sysmodel.hpp"

namespace atobs {

// Parsed run description. Sections are optional; each command states which
// ones it needs. The JSON schema is documented in the README.
struct ToolConfig {
  std::optional<LtiSystem> system;

  std::optional<SynthesisConfig> synthesis;
  std::string kind;  // observer kind name from the synthesis section

  std::optional<SignalSpec> input_signal;    // signals.u
  std::optional<SignalSpec> unknown_signal;  // signals.w

  std::optional<SimConfig> simulation;

  std::optional<DiGraph> graph;
  SwarmInit swarm;  // consensus initial conditions, empty members = defaults

  std::string realization_path;  // pre-synthesized realization to load
};

// Parses the JSON text. Structural problems throw ConfigError naming the
// offending section path (and line/column for malformed JSON).
ToolConfig parse_config(const std::string& text);

// Reads and parses a config file; throws ConfigError when unreadable.
ToolConfig load_config(const std::string& path);

}  // namespace atobs
