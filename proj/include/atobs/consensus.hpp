#pragma once

#include <iosfwd>
#include <vector>

#include "atobs/errors.hpp"
#include "atobs/matlib.hpp"
#include "atobs/sim.hpp"
#include "atobs/synth.hpp"
#include "atobs/sysmodel.hpp"

namespace atobs {

// Directed measurement topology over N agents. adjacency(i, j) = 1 means
// agent i measures the relative output y_i - y_j against agent j, so
// information flows from j to i.
struct DiGraph {
  Mat adjacency;

  DiGraph() = default;
  explicit DiGraph(Mat adj);

  Index N() const { return adjacency.rows(); }
};

// l_ii = sum_j a_ij, l_ij = -a_ij for j != i; every row sums to zero.
Mat laplacian(const DiGraph& g);

// True iff some root reaches every agent along the information-flow
// orientation. Decided by one breadth-first search per candidate root and
// cross-checked against rank(laplacian) == N - 1.
bool has_directed_spanning_tree(const DiGraph& g);

// Per-agent consensus error xi_i = sum_j a_ij(x_i - x_j) for states stored
// one column per agent; returns the errors in the same layout.
Mat consensus_error(const Mat& states, const DiGraph& g);

// Agent-independent design data of the relative-output consensus protocol.
// Every agent runs the same minimal-order delayed-reconstruction observer on
// its own relative output sum and feeds the consensus-error estimate through
// the adaptive state feedback built from the (Q, P) pair.
struct ProtocolDesign {
  double tau = 0.0;
  Mat A, B, C;  // common agent dynamics

  Mat G_hat;       // I - B (C B)^+ C
  Mat correction;  // B (C B)^+, static output correction of the estimate

  // Copies of the observer's reconstruction pieces, kept under the names the
  // design procedure produces them with (branch k = 1, 2).
  Mat T1, T2;  // Sylvester solutions, (n - m) x n
  Mat U1, U2;  // inverses of [T_k; C]
  Mat N1, N2;  // relative-output injection maps
  Mat D;       // delayed-reconstruction row block, n x 2n

  Mat P, Q;  // Q > 0 with A Q + Q A' - 2 B B' < 0 and P = Q^{-1}

  PairwiseObserverRealization observer;
};

// Builds the protocol for agent dynamics (a, b, c): decouples the relative
// input as an unknown input, synthesizes the minimal-order appointed-time
// observer for the consensus error, and solves the feedback inequality.
// Throws AssumptionViolated when rank(c b) != rank(b) or b is column-rank
// deficient, NotObservable when (a, c) fails the PBH test, and propagates
// synthesis errors (TauInadmissible and friends) unchanged.
ProtocolDesign design_protocol(const Mat& a, const Mat& b, const Mat& c,
                               const SynthesisConfig& cfg);

// Initial swarm state, one column per agent. Empty members default to zero
// states and observers and unit adaptive gains.
struct SwarmInit {
  Mat x0;         // n x N
  Mat observer0;  // (d1 + d2) x N stacked branch states
  Vec rho0;       // N, must be positive
};

// Joint trajectory of the closed-loop swarm on the fixed grid, one column per
// grid point. Per-agent series are indexed by agent. xi is the true consensus
// error, xi_hat the per-agent estimate (hold-zero reconstruction before tau,
// where `defined` is 0). u is bit-zero before tau by the protocol's rule.
struct SwarmSimResult {
  double dt = 0.0;
  double tau = 0.0;

  Vec t;
  std::vector<Mat> x;       // agent states, n x steps each
  std::vector<Mat> xi;      // true consensus errors
  std::vector<Mat> xi_hat;  // estimated consensus errors
  std::vector<Mat> u;       // applied inputs, p x steps each
  Mat rho;                  // adaptive gains, N x steps
  std::vector<char> defined;

  Index steps() const { return t.size(); }
  Index agents() const { return static_cast<Index>(x.size()); }
};

// Integrates all agents jointly with fixed-step fourth-order Runge-Kutta.
// Each agent's observer is driven only by that agent's relative output sum;
// no observer internals cross between agents. The control input and the
// adaptive-gain slope are recomputed once per grid point (the estimate only
// exists on the grid) and held over the step. Throws ConfigError for grid or
// dimension violations and when the graph has no directed spanning tree;
// throws Divergence past a state norm of 1e12.
SwarmSimResult simulate_consensus(const DiGraph& g, const ProtocolDesign& design,
                                  const SwarmInit& init, const SimConfig& cfg);

// Writes `t,xi1..xin,xihat1..xihatn,rho,u1..up` rows for one agent with 17
// significant digits; equal results serialize to identical bytes.
void write_agent_csv(std::ostream& os, const SwarmSimResult& res, Index agent);

}  // namespace atobs
