#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "atobs/cli.hpp"
#include "atobs/synth.hpp"

using namespace atobs;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("atobs_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_config(const fs::path& dir, const std::string& text,
                         const std::string& name = "config.json") {
  const fs::path p = dir / name;
  std::ofstream out(p);
  out << text;
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

cli::CommonOptions options(const std::string& config, const std::string& out_dir = "") {
  cli::CommonOptions opt;
  opt.config_path = config;
  opt.out_dir = out_dir;
  return opt;
}

size_t count_lines_with(const std::string& text, const std::string& needle) {
  size_t count = 0;
  size_t at = 0;
  while ((at = text.find(needle, at)) != std::string::npos) {
    ++count;
    at += needle.size();
  }
  return count;
}

// The worked third-order plant, with the input direction doubling as the
// unknown-input direction.
const char* kWorkedUioConfig = R"({
  "system": {
    "A": [[0, 1, 0], [1, -1, 1], [0, -8, 1]],
    "B": [[0], [0], [1]],
    "E": [[0], [0], [1]],
    "C": [[1, 0, 0], [0, 0, 1]]
  },
  "synthesis": {
    "kind": "MinimalUIO",
    "tau": 1.0,
    "sigma": -1.5,
    "branch1_poles": [-1.0],
    "branch2_poles": [-2.0],
    "bar1_poles": [-1.0, -1.0],
    "bar2_poles": [-2.0, -2.0],
    "H1": [[1.0, 0.0]],
    "H2": [[1.0, 0.0]]
  }
})";

const char* kSimulateConfig = R"({
  "system": {
    "A": [[0, 1, 0], [1, -1, 1], [0, -8, 1]],
    "B": [[0], [0], [1]],
    "C": [[1, 0, 0], [0, 0, 1]]
  },
  "synthesis": {
    "kind": "MinimalNoUI",
    "tau": 1.0,
    "sigma": -1.5,
    "branch1_poles": [-1.0],
    "branch2_poles": [-2.0],
    "bar1_poles": [-1.0, -1.0],
    "bar2_poles": [-2.0, -2.0],
    "H1": [[1.0, 0.0]],
    "H2": [[1.0, 0.0]]
  },
  "signals": {
    "u": { "kind": "sinusoid", "dim": 1, "amplitude": 0.8, "omega": 2.0 }
  },
  "simulation": {
    "dt": 0.001,
    "t_end": 1.5,
    "tau": 1.0,
    "x0": [0.4, -0.3, 0.2],
    "observer_init": [0.5, -0.25]
  }
})";

}  // namespace

TEST_CASE("config parsing reports precise diagnostics") {
  const fs::path dir = fresh_dir("parse");
  std::ostringstream out;

  // Malformed JSON: the diagnosis carries line and column.
  const std::string broken = write_config(dir, "{\n  \"system\": {\n    \"A\": [[0, 1,\n");
  CHECK(cli::run_check(options(broken), out) == cli::kExitConfig);
  CHECK(out.str().find("error:") != std::string::npos);
  CHECK(out.str().find("line") != std::string::npos);
  CHECK(out.str().find("column") != std::string::npos);

  // Structurally valid JSON with a ragged matrix row.
  out.str("");
  const std::string ragged = write_config(
      dir, R"({"system": {"A": [[0, 1], [1]], "C": [[1, 0]]}})", "ragged.json");
  CHECK(cli::run_check(options(ragged), out) == cli::kExitConfig);
  CHECK(out.str().find("system.A row 2") != std::string::npos);

  // A non-numeric cell names its exact position.
  out.str("");
  const std::string textual = write_config(
      dir, R"({"system": {"A": [[0, "x"], [1, 0]], "C": [[1, 0]]}})", "textual.json");
  CHECK(cli::run_check(options(textual), out) == cli::kExitConfig);
  CHECK(out.str().find("row 1, column 2") != std::string::npos);

  // Missing file and missing required section.
  out.str("");
  CHECK(cli::run_check(options((dir / "nope.json").string()), out) == cli::kExitConfig);
  CHECK(out.str().find("cannot read") != std::string::npos);

  out.str("");
  const std::string no_synth = write_config(
      dir, R"({"system": {"A": [[0]], "C": [[1]]}})", "nosynth.json");
  CHECK(cli::run_synth(options(no_synth, (dir / "out").string()), out) == cli::kExitConfig);
  CHECK(out.str().find("synthesis section") != std::string::npos);
}

TEST_CASE("check reports the decoupling conditions and their verdict") {
  const fs::path dir = fresh_dir("check");

  // The worked plant passes every condition.
  const std::string good = write_config(dir, kWorkedUioConfig);
  std::ostringstream out;
  const fs::path out_dir = dir / "report";
  CHECK(cli::run_check(options(good, out_dir.string()), out) == cli::kExitOk);
  const auto report = nlohmann::json::parse(out.str());
  CHECK(report.at("has_unknown_input").get<bool>());
  CHECK(report.at("cond1_holds").get<bool>());
  CHECK(report.at("cond2_holds").get<bool>());
  CHECK(report.at("observability_holds").get<bool>());
  CHECK(report.at("admissible").get<bool>());
  CHECK(report.at("rank_EF").get<int>() == 1);
  CHECK(fs::exists(out_dir / "report.json"));
  CHECK(fs::exists(out_dir / "manifest.json"));
  const auto manifest = nlohmann::json::parse(slurp(out_dir / "manifest.json"));
  CHECK(manifest.at("command").get<std::string>() == "check");
  CHECK(manifest.at("tool_version").get<std::string>() == "0.1.0");
  CHECK(manifest.at("exit_code").get<int>() == 0);

  // An unknown input invisible in the output fails the first rank condition.
  std::ostringstream out_bad;
  const std::string bad = write_config(dir, R"({
    "system": {
      "A": [[0, 1, 0], [1, -1, 1], [0, -8, 1]],
      "E": [[0], [1], [0]],
      "C": [[1, 0, 0], [0, 0, 1]]
    }
  })", "bad.json");
  CHECK(cli::run_check(options(bad), out_bad) == cli::kExitCondition);
  const auto bad_report = nlohmann::json::parse(out_bad.str());
  CHECK_FALSE(bad_report.at("cond1_holds").get<bool>());
  CHECK_FALSE(bad_report.at("admissible").get<bool>());

  // Plants without unknown input reduce to the observability test.
  std::ostringstream out_plain;
  const std::string plain = write_config(dir, R"({
    "system": {
      "A": [[0, 1, 0], [1, -1, 1], [0, -8, 1]],
      "B": [[0], [0], [1]],
      "C": [[1, 0, 0], [0, 0, 1]]
    }
  })", "plain.json");
  CHECK(cli::run_check(options(plain), out_plain) == cli::kExitOk);
  const auto plain_report = nlohmann::json::parse(out_plain.str());
  CHECK_FALSE(plain_report.at("has_unknown_input").get<bool>());
  CHECK(plain_report.at("observability_holds").get<bool>());
}

TEST_CASE("synth stores the minimal unknown-input realization with the reference block") {
  const fs::path dir = fresh_dir("synth");
  const std::string config = write_config(dir, kWorkedUioConfig);
  const fs::path out_dir = dir / "out";

  std::ostringstream out;
  REQUIRE(cli::run_synth(options(config, out_dir.string()), out) == cli::kExitOk);
  CHECK(out.str().find("realization.json") != std::string::npos);

  const PairwiseObserverRealization obs =
      deserialize_realization(slurp(out_dir / "realization.json"));
  CHECK(obs.kind == ObserverKind::MinimalUIO);
  CHECK(obs.nx == 3);
  CHECK(obs.b1.dim() == 1);
  CHECK(obs.b2.dim() == 1);

  // The delayed reconstruction block collapses to two scalar multiples of the
  // identity whose rounded values are -0.582 and 1.582.
  const double c1 = 1.0 / (1.0 - std::exp(1.0));
  const double c2 = 1.0 / (1.0 - std::exp(-1.0));
  Mat expected(3, 6);
  expected << c1 * Mat::Identity(3, 3), c2 * Mat::Identity(3, 3);
  REQUIRE(obs.recon_D.rows() == 3);
  REQUIRE(obs.recon_D.cols() == 6);
  CHECK((obs.recon_D - expected).cwiseAbs().maxCoeff() < 1e-9);
  Mat rounded(3, 6);
  rounded << -0.582 * Mat::Identity(3, 3), 1.582 * Mat::Identity(3, 3);
  CHECK((obs.recon_D - rounded).cwiseAbs().maxCoeff() < 1e-3);

  // Equal config and seed produce byte-identical output files.
  const fs::path out_dir2 = dir / "out2";
  std::ostringstream out2;
  REQUIRE(cli::run_synth(options(config, out_dir2.string()), out2) == cli::kExitOk);
  CHECK(slurp(out_dir / "realization.json") == slurp(out_dir2 / "realization.json"));
}

TEST_CASE("synth covers the reduced kind and rejects inadmissible appointed times") {
  const fs::path dir = fresh_dir("synth_variants");

  const std::string reduced = write_config(dir, R"({
    "system": {
      "A": [[0, 1, 0], [1, -1, 1], [0, -8, 1]],
      "B": [[0], [0], [1]],
      "E": [[0], [0], [1]],
      "C": [[1, 0, 0], [0, 0, 1]]
    },
    "synthesis": {
      "kind": "ReducedUIO",
      "tau": 1.0,
      "sigma": -1.5,
      "branch1_poles": [-1.0, -1.2],
      "branch2_poles": [-2.0, -2.2],
      "seed": 7
    }
  })", "reduced.json");
  const fs::path out_dir = dir / "reduced_out";
  std::ostringstream out;
  REQUIRE(cli::run_synth(options(reduced, out_dir.string()), out) == cli::kExitOk);
  const PairwiseObserverRealization obs =
      deserialize_realization(slurp(out_dir / "realization.json"));
  CHECK(obs.kind == ObserverKind::ReducedUIO);
  CHECK(obs.b1.dim() == 2);
  CHECK(obs.b2.dim() == 2);

  // tau = 0 can never be admissible; the manifest still records the failure.
  std::string zero_tau = kWorkedUioConfig;
  const auto at = zero_tau.find("\"tau\": 1.0");
  REQUIRE(at != std::string::npos);
  zero_tau.replace(at, 10, "\"tau\": 0.0");
  const std::string zero = write_config(dir, zero_tau, "zero_tau.json");
  const fs::path zero_out = dir / "zero_out";
  std::ostringstream out_zero;
  CHECK(cli::run_synth(options(zero, zero_out.string()), out_zero) == cli::kExitTau);
  CHECK(out_zero.str().find("error:") != std::string::npos);
  const auto manifest = nlohmann::json::parse(slurp(zero_out / "manifest.json"));
  CHECK(manifest.at("exit_code").get<int>() == cli::kExitTau);
  CHECK_FALSE(fs::exists(zero_out / "realization.json"));
}

TEST_CASE("simulate writes the trajectory and checks post-appointed-time exactness") {
  const fs::path dir = fresh_dir("simulate");
  const std::string config = write_config(dir, kSimulateConfig);
  const fs::path out_dir = dir / "out";

  std::ostringstream out;
  REQUIRE(cli::run_simulate(options(config, out_dir.string()), out) == cli::kExitOk);
  CHECK(out.str().find("within") != std::string::npos);

  const std::string csv = slurp(out_dir / "trajectory.csv");
  CHECK(csv.rfind("t,x1,x2,x3,xhat1,xhat2,xhat3,err,defined\n", 0) == 0);
  CHECK(count_lines_with(csv, "\n") == 1502);  // header plus 1501 grid points

  // Re-running the same config produces the same bytes.
  const fs::path out_dir2 = dir / "out2";
  std::ostringstream out2;
  REQUIRE(cli::run_simulate(options(config, out_dir2.string()), out2) == cli::kExitOk);
  CHECK(slurp(out_dir2 / "trajectory.csv") == csv);

  // An unstable scalar plant trips the divergence guard.
  const std::string diverging = write_config(dir, R"({
    "system": { "A": [[3]], "B": [[0]], "C": [[1]] },
    "synthesis": { "kind": "MinimalNoUI", "tau": 0.5 },
    "simulation": { "dt": 0.001, "t_end": 12.0, "tau": 0.5, "x0": [1.0] }
  })", "diverging.json");
  std::ostringstream out_div;
  CHECK(cli::run_simulate(options(diverging, (dir / "div_out").string()), out_div) ==
        cli::kExitDivergence);
}

TEST_CASE("consensus writes per-agent series and enforces the spanning tree") {
  const fs::path dir = fresh_dir("consensus");
  const std::string config = write_config(dir, R"({
    "system": {
      "A": [[0, 1, 0], [1, -1, 1], [0, -8, 1]],
      "B": [[0], [0], [1]],
      "C": [[1, 0, 0], [0, 0, 1]]
    },
    "synthesis": {
      "tau": 1.0,
      "sigma": -1.5,
      "branch1_poles": [-1.0],
      "branch2_poles": [-2.0],
      "bar1_poles": [-1.0, -1.0],
      "bar2_poles": [-2.0, -2.0],
      "H1": [[1.0, 0.0]],
      "H2": [[1.0, 0.0]]
    },
    "graph": {
      "adjacency": [
        [0, 0, 0, 1, 0, 1],
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 1, 0, 0, 0],
        [0, 0, 0, 1, 0, 0],
        [0, 0, 0, 0, 1, 0]
      ]
    },
    "consensus": {
      "x0": [
        [0.9, -0.4, 0.2, -0.7, 0.5, -0.1],
        [-0.3, 0.8, -0.6, 0.1, -0.9, 0.4],
        [0.2, -0.5, 0.7, -0.2, 0.3, -0.8]
      ],
      "rho0": [1, 1, 1, 1, 1, 1]
    },
    "simulation": { "dt": 0.001, "t_end": 3.0, "tau": 1.0 }
  })");
  const fs::path out_dir = dir / "out";

  std::ostringstream out;
  REQUIRE(cli::run_consensus(options(config, out_dir.string()), out) == cli::kExitOk);
  CHECK(out.str().find("final max consensus error") != std::string::npos);
  for (int i = 1; i <= 6; ++i) {
    CHECK(fs::exists(out_dir / ("agent_" + std::to_string(i) + ".csv")));
  }
  const std::string csv = slurp(out_dir / "agent_1.csv");
  CHECK(csv.rfind("t,xi1,xi2,xi3,xihat1,xihat2,xihat3,rho,u1\n", 0) == 0);

  // A graph with an unreachable agent is rejected before any design work.
  const std::string no_tree = write_config(dir, R"({
    "system": {
      "A": [[0, 1, 0], [1, -1, 1], [0, -8, 1]],
      "B": [[0], [0], [1]],
      "C": [[1, 0, 0], [0, 0, 1]]
    },
    "synthesis": { "tau": 1.0, "sigma": -1.5,
      "branch1_poles": [-1.0], "branch2_poles": [-2.0],
      "bar1_poles": [-1.0, -1.0], "bar2_poles": [-2.0, -2.0],
      "H1": [[1.0, 0.0]], "H2": [[1.0, 0.0]] },
    "graph": { "adjacency": [[0, 1, 0], [1, 0, 0], [0, 0, 0]] },
    "simulation": { "dt": 0.001, "t_end": 3.0, "tau": 1.0 }
  })", "no_tree.json");
  std::ostringstream out_bad;
  CHECK(cli::run_consensus(options(no_tree, (dir / "bad_out").string()), out_bad) ==
        cli::kExitCondition);
  CHECK(out_bad.str().find("spanning tree") != std::string::npos);
}

TEST_CASE("the reproduction run passes its reference values and flags perturbed ones") {
  const fs::path dir = fresh_dir("repro");

  cli::CommonOptions opt;
  opt.out_dir = (dir / "out").string();
  std::ostringstream out;
  CHECK(cli::run_repro_example(opt, out) == cli::kExitOk);
  const std::string text = out.str();
  CHECK(count_lines_with(text, "FAIL") == 0);
  CHECK(count_lines_with(text, "PASS") == 14);
  for (const char* item : {"T1", "T2", "N1", "N2", "U1", "U2", "D", "eigenvalues",
                           "reference_lmi", "computed_lmi_pair", "estimation_exactness",
                           "consensus_decay", "quiet_start", "adaptive_gain_monotone"}) {
    CHECK(text.find(std::string("PASS ") + item) != std::string::npos);
  }
  CHECK(slurp(dir / "out" / "repro_report.txt") == text);

  // A perturbed reference value is reported by name and flips the exit code.
  const std::string golden = write_config(dir, R"({"T1": [[0.0, 1.0, -0.9]]})", "golden.json");
  cli::CommonOptions opt_bad;
  opt_bad.golden_path = golden;
  std::ostringstream out_bad;
  CHECK(cli::run_repro_example(opt_bad, out_bad) == cli::kExitMismatch);
  CHECK(out_bad.str().find("FAIL T1") != std::string::npos);
  CHECK(count_lines_with(out_bad.str(), "FAIL") == 1);

  // The reference values do not depend on the synthesis seed.
  cli::CommonOptions opt_seed;
  opt_seed.seed = 777;
  std::ostringstream out_seed;
  CHECK(cli::run_repro_example(opt_seed, out_seed) == cli::kExitOk);
}

#ifdef ATOBS_CLI_BIN
TEST_CASE("the command-line binary honours the exit-code contract") {
  const auto run = [](const std::string& args) {
    const std::string cmd = std::string(ATOBS_CLI_BIN) + " " + args + " > /dev/null 2>&1";
    const int raw = std::system(cmd.c_str());
    REQUIRE(raw != -1);
    return WEXITSTATUS(raw);
  };
  CHECK(run("--help") == 0);
  CHECK(run("check --config /nonexistent/config.json") == cli::kExitConfig);
  CHECK(run("bogus-command") == cli::kExitConfig);
  CHECK(run("synth --config /nonexistent/config.json") == cli::kExitConfig);  // missing --out
}
#endif
