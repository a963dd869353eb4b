#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace atobs::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit code contract shared by every command. No command returns kExitOk when
// a required condition was found violated.
inline constexpr int kExitOk = 0;          // ran to completion, all checks hold
inline constexpr int kExitConfig = 1;      // unreadable or malformed configuration
inline constexpr int kExitCondition = 2;   // existence/assumption/verification failure
inline constexpr int kExitTau = 3;         // appointed time numerically inadmissible
inline constexpr int kExitDivergence = 4;  // simulated trajectory left the valid range
inline constexpr int kExitMismatch = 5;    // reproduction run disagrees with the goldens

// Options shared by the commands; each one reads the members it needs.
struct CommonOptions {
  std::string config_path;
  std::string out_dir;                // commands that produce files require this
  std::optional<std::uint64_t> seed;  // overrides the seeds from the config when set
  double tol = 1e-6;                  // exactness tolerance used by `simulate`
  std::string golden_path;            // `repro-example` override; empty = built-in values
};

// Prints the structural checks (decoupling ranks, detectability of the
// decoupled pair) for the system in the config. Exit 0 iff every condition
// required for observer existence holds.
int run_check(const CommonOptions& opt, std::ostream& out);

// Synthesizes the observer kind named in the config and stores the
// realization as out_dir/realization.json.
int run_synth(const CommonOptions& opt, std::ostream& out);

// Synthesizes (or loads) a realization, simulates plant and observer, writes
// out_dir/trajectory.csv and prints the worst post-appointed-time relative
// error. Exit 2 when that error exceeds opt.tol.
int run_simulate(const CommonOptions& opt, std::ostream& out);

// Designs the relative-output protocol for the agent model, simulates the
// swarm on the configured digraph and writes one CSV per agent.
int run_consensus(const CommonOptions& opt, std::ostream& out);

// Self-contained reproduction of the worked third-order design: compares the
// synthesized maps, spectra and feedback pair against stored reference values
// and re-runs the six-agent scenario. Prints one PASS/FAIL line per item;
// exit kExitMismatch when any item fails.
int run_repro_example(const CommonOptions& opt, std::ostream& out);

}  // namespace atobs::cli
