#include "atobs/consensus.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <utility>
#include <vector>

namespace atobs {

DiGraph::DiGraph(Mat adj) {
  if (adj.rows() != adj.cols() || adj.rows() < 1) {
    throw ConfigError("DiGraph: adjacency must be square and nonempty");
  }
  for (Index i = 0; i < adj.rows(); ++i) {
    for (Index j = 0; j < adj.cols(); ++j) {
      const double v = adj(i, j);
      if (v != 0.0 && v != 1.0) {
        throw ConfigError("DiGraph: adjacency entries must be 0 or 1");
      }
      if (i == j && v != 0.0) {
        throw ConfigError("DiGraph: adjacency diagonal must be zero");
      }
    }
  }
  adjacency = std::move(adj);
}

Mat laplacian(const DiGraph& g) {
  const Index n = g.N();
  Mat l = -g.adjacency;
  for (Index i = 0; i < n; ++i) {
    l(i, i) = g.adjacency.row(i).sum();
  }
  return l;
}

bool has_directed_spanning_tree(const DiGraph& g) {
  const Index n = g.N();
  // a_ij = 1 carries information from j to i, so BFS runs along j -> i.
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (g.adjacency(i, j) != 0.0) out[static_cast<std::size_t>(j)].push_back(i);
    }
  }

  bool reached_all = false;
  for (Index root = 0; root < n && !reached_all; ++root) {
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<Index> queue{root};
    seen[static_cast<std::size_t>(root)] = 1;
    Index count = 1;
    while (!queue.empty()) {
      const Index v = queue.back();
      queue.pop_back();
      for (Index next : out[static_cast<std::size_t>(v)]) {
        if (!seen[static_cast<std::size_t>(next)]) {
          seen[static_cast<std::size_t>(next)] = 1;
          queue.push_back(next);
          ++count;
        }
      }
    }
    reached_all = count == n;
  }

  const bool rank_says = rank_of(laplacian(g)).rank == n - 1;
  if (rank_says != reached_all) {
    throw NumericCheckFailed(
        "has_directed_spanning_tree: reachability and Laplacian rank disagree");
  }
  return reached_all;
}

Mat consensus_error(const Mat& states, const DiGraph& g) {
  if (states.cols() != g.N()) {
    throw ConfigError("consensus_error: need one state column per agent");
  }
  return states * laplacian(g).transpose();
}

ProtocolDesign design_protocol(const Mat& a, const Mat& b, const Mat& c,
                               const SynthesisConfig& cfg) {
  const Index n = a.rows();
  const Index p = b.cols();
  const Index m = c.rows();
  if (a.cols() != n || n < 1) throw ConfigError("design_protocol: a must be square");
  if (b.rows() != n || p < 1) throw ConfigError("design_protocol: b must be n x p, p >= 1");
  if (c.cols() != n || m < 1) throw ConfigError("design_protocol: c must be m x n, m >= 1");

  if (rank_of(b).rank != p) {
    throw AssumptionViolated("design_protocol: b must have full column rank");
  }
  if (rank_of(Mat(c * b)).rank != p) {
    throw AssumptionViolated("design_protocol: rank(c b) must equal rank(b)");
  }
  if (!pbh_observable(a, c)) {
    throw NotObservable("design_protocol: (a, c) must be observable");
  }

  // Each agent sees only its relative output sum, and the relative input sum
  // entering the consensus-error dynamics is unknown to the agent. That is
  // exactly the unknown-input estimation problem with E = b and no known
  // input channel.
  const LtiSystem error_dynamics(a, Mat::Zero(n, 0), b, c, Mat::Zero(m, 0), Mat::Zero(m, p));
  const BreveModel breve = reconfigure_breve(error_dynamics);
  PairwiseObserverRealization obs = synth_uio_minimal(breve, cfg);

  auto [q, pm] = stabilizing_lmi_pair(a, b);

  ProtocolDesign d;
  d.tau = cfg.tau;
  d.A = a;
  d.B = b;
  d.C = c;
  d.G_hat = breve.G_breve;
  d.correction = breve.correction_y;
  d.T1 = obs.b1.T;
  d.T2 = obs.b2.T;
  d.U1 = obs.b1.U;
  d.U2 = obs.b2.U;
  d.N1 = obs.b1.from_y;
  d.N2 = obs.b2.from_y;
  d.D = obs.recon_D;
  d.Q = std::move(q);
  d.P = std::move(pm);
  d.observer = std::move(obs);
  return d;
}

SwarmSimResult simulate_consensus(const DiGraph& g, const ProtocolDesign& design,
                                  const SwarmInit& init, const SimConfig& cfg) {
  const Index N = g.N();
  const Index n = design.A.rows();
  const Index p = design.B.cols();
  const Index m = design.C.rows();
  const PairwiseObserverRealization& obs = design.observer;
  if (obs.nx != n || obs.ny != m) {
    throw ConfigError("simulate_consensus: design observer does not match the agent dynamics");
  }
  if (obs.nu != 0) {
    throw ConfigError("simulate_consensus: protocol observer must not expect a known input");
  }
  if (!has_directed_spanning_tree(g)) {
    throw ConfigError("simulate_consensus: the graph needs a directed spanning tree");
  }
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) {
    throw ConfigError("simulate_consensus: dt must be positive");
  }
  if (!(cfg.tau > 0.0) || !std::isfinite(cfg.tau)) {
    throw ConfigError("simulate_consensus: tau must be positive");
  }
  const auto n_tau = static_cast<Index>(std::llround(cfg.tau / cfg.dt));
  if (n_tau < 1 ||
      std::abs(static_cast<double>(n_tau) * cfg.dt - cfg.tau) > 1e-12 * std::max(1.0, cfg.tau)) {
    throw ConfigError("simulate_consensus: tau must be an integer multiple of dt");
  }
  if (!(cfg.t_end >= cfg.tau + cfg.dt)) {
    throw ConfigError("simulate_consensus: t_end must reach at least tau + dt");
  }
  if (obs.needs_delay() && std::abs(obs.tau - cfg.tau) > 1e-12 * std::max(1.0, cfg.tau)) {
    throw ConfigError("simulate_consensus: design was synthesized for a different tau");
  }

  const Index d1 = obs.b1.dim();
  const Index d2 = obs.b2.dim();
  Mat X = init.x0.size() == 0 ? Mat(Mat::Zero(n, N)) : Mat(init.x0);
  if (X.rows() != n || X.cols() != N) {
    throw ConfigError("simulate_consensus: x0 must be n x N");
  }
  Mat V1 = Mat::Zero(d1, N);
  Mat V2 = Mat::Zero(d2, N);
  if (init.observer0.size() != 0) {
    if (init.observer0.rows() != d1 + d2 || init.observer0.cols() != N) {
      throw ConfigError("simulate_consensus: observer0 must stack both branches per agent");
    }
    V1 = init.observer0.topRows(d1);
    V2 = init.observer0.bottomRows(d2);
  }
  Vec rho = init.rho0.size() == 0 ? Vec(Vec::Ones(N)) : Vec(init.rho0);
  if (rho.size() != N) throw ConfigError("simulate_consensus: rho0 must have one gain per agent");
  if ((rho.array() <= 0.0).any()) {
    throw ConfigError("simulate_consensus: adaptive gains must start positive");
  }

  const Mat L = laplacian(g);
  const Mat Lt = L.transpose();
  const Mat BtP = design.B.transpose() * design.P;
  const auto k_last = static_cast<Index>(std::floor(cfg.t_end / cfg.dt + 1e-9));
  const Index len = k_last + 1;

  SwarmSimResult res;
  res.dt = cfg.dt;
  res.tau = cfg.tau;
  res.t.resize(len);
  res.x.assign(static_cast<std::size_t>(N), Mat(n, len));
  res.xi.assign(static_cast<std::size_t>(N), Mat(n, len));
  res.xi_hat.assign(static_cast<std::size_t>(N), Mat(n, len));
  res.u.assign(static_cast<std::size_t>(N), Mat(p, len));
  res.rho.resize(N, len);
  res.defined.assign(static_cast<std::size_t>(len), 0);

  std::vector<HistoryBuffer> bufs(static_cast<std::size_t>(N),
                                  HistoryBuffer(obs.phi_dim(), n_tau));
  const Vec u_none = Vec::Zero(0);
  const double h = cfg.dt;

  auto deriv = [&](const Mat& Xs, const Mat& V1s, const Mat& V2s, const Mat& Uc, Mat& dX,
                   Mat& dV1, Mat& dV2) {
    const Mat Z = (design.C * Xs) * Lt;
    dX = design.A * Xs + design.B * Uc;
    dV1 = obs.b1.A * V1s + obs.b1.from_y * Z;
    dV2 = obs.b2.A * V2s + obs.b2.from_y * Z;
  };

  Mat k1x, k1v1, k1v2, k2x, k2v1, k2v2, k3x, k3v1, k3v2, k4x, k4v1, k4v2;
  Mat Uc(p, N);
  for (Index k = 0; k < len; ++k) {
    const double tk = static_cast<double>(k) * h;
    const Mat Z = (design.C * X) * Lt;
    const Mat Xi = X * Lt;
    const bool have_delay = bufs[0].warm();
    const bool is_defined = !obs.needs_delay() || have_delay;
    const bool engaged = k >= n_tau;

    res.t(k) = tk;
    res.defined[static_cast<std::size_t>(k)] = is_defined ? 1 : 0;

    Vec rho_dot = Vec::Zero(N);
    for (Index i = 0; i < N; ++i) {
      const auto iz = static_cast<std::size_t>(i);
      const Vec phi_now = obs.phi(V1.col(i), V2.col(i), Z.col(i), u_none);
      const Vec xi_hat = obs.estimate(phi_now, bufs[iz].delayed(), Z.col(i), u_none, have_delay);

      res.x[iz].col(k) = X.col(i);
      res.xi[iz].col(k) = Xi.col(i);
      res.xi_hat[iz].col(k) = xi_hat;
      res.rho(i, k) = rho(i);

      // Piecewise rule: no input at all before the appointed time, adaptive
      // feedback on the exact consensus-error estimate from then on. The gain
      // slope is frozen over the step together with the input.
      if (engaged) {
        const Vec bp_xi = BtP * xi_hat;
        const double quad = xi_hat.dot(design.P * xi_hat);
        Uc.col(i) = -(rho(i) + quad) * bp_xi;
        rho_dot(i) = bp_xi.squaredNorm();
      } else {
        Uc.col(i).setZero();
      }
      res.u[iz].col(k) = Uc.col(i);

      bufs[iz].push(phi_now);
    }

    const double state_norm =
        std::max({X.colwise().norm().maxCoeff(), d1 > 0 ? V1.colwise().norm().maxCoeff() : 0.0,
                  d2 > 0 ? V2.colwise().norm().maxCoeff() : 0.0});
    if (!(state_norm <= 1e12)) {
      std::ostringstream msg;
      msg << "simulate_consensus: state norm " << state_norm << " exceeded 1e12 at t = " << tk;
      throw Divergence(msg.str());
    }

    if (k + 1 == len) break;

    deriv(X, V1, V2, Uc, k1x, k1v1, k1v2);
    deriv(X + 0.5 * h * k1x, V1 + 0.5 * h * k1v1, V2 + 0.5 * h * k1v2, Uc, k2x, k2v1, k2v2);
    deriv(X + 0.5 * h * k2x, V1 + 0.5 * h * k2v1, V2 + 0.5 * h * k2v2, Uc, k3x, k3v1, k3v2);
    deriv(X + h * k3x, V1 + h * k3v1, V2 + h * k3v2, Uc, k4x, k4v1, k4v2);
    X += (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    V1 += (h / 6.0) * (k1v1 + 2.0 * k2v1 + 2.0 * k3v1 + k4v1);
    V2 += (h / 6.0) * (k1v2 + 2.0 * k2v2 + 2.0 * k3v2 + k4v2);
    rho += h * rho_dot;
  }
  return res;
}

void write_agent_csv(std::ostream& os, const SwarmSimResult& res, Index agent) {
  if (agent < 0 || agent >= res.agents()) {
    throw ConfigError("write_agent_csv: agent index out of range");
  }
  const auto a = static_cast<std::size_t>(agent);
  const Index n = res.xi[a].rows();
  const Index p = res.u[a].rows();
  os << 't';
  for (Index i = 1; i <= n; ++i) os << ",xi" << i;
  for (Index i = 1; i <= n; ++i) os << ",xihat" << i;
  os << ",rho";
  for (Index i = 1; i <= p; ++i) os << ",u" << i;
  os << '\n';

  char buf[40];
  auto append = [&](double value) {
    std::snprintf(buf, sizeof buf, "%.17g", value);
    os << ',' << buf;
  };
  for (Index k = 0; k < res.steps(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", res.t(k));
    os << buf;
    for (Index i = 0; i < n; ++i) append(res.xi[a](i, k));
    for (Index i = 0; i < n; ++i) append(res.xi_hat[a](i, k));
    append(res.rho(agent, k));
    for (Index i = 0; i < p; ++i) append(res.u[a](i, k));
    os << '\n';
  }
}

}  // namespace atobs
