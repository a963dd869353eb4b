#include "atobs/sim.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

namespace atobs {

namespace {

// Stateless counter hash; gives the piecewise-constant kind random access to
// its cell values without replaying a sequential generator.
std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double unit_from_bits(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1p-53; }

void require_finite(double value, const char* what) {
  if (!std::isfinite(value)) {
    throw ConfigError(std::string("make_signal: ") + what + " must be finite");
  }
}

// Sequential one-pole low-pass over a seeded white sequence, grown on demand
// and sampled with zero-order hold. Kept behind a shared_ptr so the returned
// std::function stays copyable.
struct FilteredNoiseCache {
  std::mt19937_64 rng;
  std::vector<Vec> states;
  double alpha = 0.0;
  double amplitude = 0.0;
  Index dim = 0;

  const Vec& at(Index idx) {
    while (static_cast<Index>(states.size()) <= idx) {
      Vec white(dim);
      for (Index i = 0; i < dim; ++i) {
        white(i) = amplitude * (2.0 * unit_from_bits(rng()) - 1.0);
      }
      if (states.empty()) {
        states.push_back((1.0 - alpha) * white);
      } else {
        states.push_back(alpha * states.back() + (1.0 - alpha) * white);
      }
    }
    return states[static_cast<std::size_t>(idx)];
  }
};

}  // namespace

const char* to_string(SignalKind kind) {
  switch (kind) {
    case SignalKind::Zero: return "zero";
    case SignalKind::Step: return "step";
    case SignalKind::Sinusoid: return "sinusoid";
    case SignalKind::PiecewiseConstant: return "piecewise_constant";
    case SignalKind::FilteredNoise: return "filtered_noise";
  }
  throw ConfigError("to_string: unknown signal kind");
}

SignalKind signal_kind_from_string(const std::string& name) {
  if (name == "zero") return SignalKind::Zero;
  if (name == "step") return SignalKind::Step;
  if (name == "sinusoid") return SignalKind::Sinusoid;
  if (name == "piecewise_constant") return SignalKind::PiecewiseConstant;
  if (name == "filtered_noise") return SignalKind::FilteredNoise;
  throw ConfigError("signal_kind_from_string: unknown kind '" + name + "'");
}

SignalFn make_signal(const SignalSpec& spec) {
  if (spec.dim < 0) throw ConfigError("make_signal: dim must be nonnegative");
  require_finite(spec.amplitude, "amplitude");

  switch (spec.kind) {
    case SignalKind::Zero:
      return [dim = spec.dim](double) { return Vec(Vec::Zero(dim)); };

    case SignalKind::Step:
      require_finite(spec.step_time, "step_time");
      return [s = spec](double t) {
        return Vec(t >= s.step_time ? Vec::Constant(s.dim, s.amplitude) : Vec::Zero(s.dim));
      };

    case SignalKind::Sinusoid:
      require_finite(spec.omega, "omega");
      require_finite(spec.phase, "phase");
      return [s = spec](double t) {
        Vec out(s.dim);
        for (Index i = 0; i < s.dim; ++i) {
          // Components run in staggered phase so multichannel signals excite
          // more than one direction.
          out(i) = s.amplitude *
                   std::sin(s.omega * t + s.phase + static_cast<double>(i) * std::numbers::pi / 2.0);
        }
        return out;
      };

    case SignalKind::PiecewiseConstant:
      if (!(spec.switch_interval > 0.0) || !std::isfinite(spec.switch_interval)) {
        throw ConfigError("make_signal: switch_interval must be positive");
      }
      return [s = spec](double t) {
        const double cell_f = std::floor(t / s.switch_interval);
        const auto cell = static_cast<std::uint64_t>(std::max(0.0, cell_f));
        std::uint64_t state = s.seed + 0x9e3779b97f4a7c15ull * (cell + 1);
        Vec out(s.dim);
        for (Index i = 0; i < s.dim; ++i) {
          out(i) = s.amplitude * (2.0 * unit_from_bits(splitmix64(state)) - 1.0);
        }
        return out;
      };

    case SignalKind::FilteredNoise: {
      if (!(spec.sample_dt > 0.0) || !std::isfinite(spec.sample_dt)) {
        throw ConfigError("make_signal: sample_dt must be positive");
      }
      if (!(spec.cutoff > 0.0) || !std::isfinite(spec.cutoff)) {
        throw ConfigError("make_signal: cutoff must be positive");
      }
      auto cache = std::make_shared<FilteredNoiseCache>();
      cache->rng.seed(spec.seed);
      cache->alpha = std::exp(-spec.cutoff * spec.sample_dt);
      cache->amplitude = spec.amplitude;
      cache->dim = spec.dim;
      return [cache, sample_dt = spec.sample_dt](double t) {
        const auto idx = static_cast<Index>(std::max(0.0, std::floor(t / sample_dt)));
        return cache->at(idx);
      };
    }
  }
  throw ConfigError("make_signal: unknown signal kind");
}

HistoryBuffer::HistoryBuffer(Index dim, Index span) {
  if (dim < 0 || span < 1) {
    throw ConfigError("HistoryBuffer: need a nonnegative dimension and a positive span");
  }
  ring_.assign(static_cast<std::size_t>(span), Vec::Zero(dim));
}

void HistoryBuffer::push(const Vec& sample) {
  if (sample.size() != ring_.front().size()) {
    throw ConfigError("HistoryBuffer: sample dimension changed");
  }
  ring_[static_cast<std::size_t>(head_)] = sample;
  head_ = (head_ + 1) % static_cast<Index>(ring_.size());
  ++pushed_;
}

SimResult simulate(const LtiSystem& sys, const PairwiseObserverRealization& obs,
                   const SignalFn& u_fn, const SignalFn& w_fn, const SimConfig& cfg) {
  const Index n = sys.n();
  if (obs.nx != n || obs.ny != sys.m() || obs.nu != sys.p()) {
    throw ConfigError("simulate: realization was built for a different plant shape");
  }
  if (u_fn(0.0).size() != sys.p() || w_fn(0.0).size() != sys.q()) {
    throw ConfigError("simulate: signal callable dimensions disagree with the plant");
  }
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) {
    throw ConfigError("simulate: dt must be positive");
  }
  if (!(cfg.tau > 0.0) || !std::isfinite(cfg.tau)) {
    throw ConfigError("simulate: tau must be positive");
  }
  const auto n_tau = static_cast<Index>(std::llround(cfg.tau / cfg.dt));
  if (n_tau < 1 ||
      std::abs(static_cast<double>(n_tau) * cfg.dt - cfg.tau) > 1e-12 * std::max(1.0, cfg.tau)) {
    throw ConfigError("simulate: tau must be an integer multiple of dt");
  }
  if (!(cfg.t_end >= cfg.tau + cfg.dt)) {
    throw ConfigError("simulate: t_end must reach at least tau + dt");
  }
  if (obs.needs_delay() && std::abs(obs.tau - cfg.tau) > 1e-12 * std::max(1.0, cfg.tau)) {
    throw ConfigError("simulate: realization was synthesized for a different tau");
  }

  const Index d1 = obs.b1.dim();
  const Index d2 = obs.b2.dim();
  Vec xk = cfg.x0.size() == 0 ? Vec(Vec::Zero(n)) : Vec(cfg.x0);
  if (xk.size() != n) throw ConfigError("simulate: x0 dimension mismatch");
  Vec v1k = Vec::Zero(d1);
  Vec v2k = Vec::Zero(d2);
  if (cfg.observer_init.size() != 0) {
    if (cfg.observer_init.size() != d1 + d2) {
      throw ConfigError("simulate: observer_init must stack both branch states");
    }
    v1k = cfg.observer_init.head(d1);
    v2k = cfg.observer_init.tail(d2);
  }

  const auto k_last = static_cast<Index>(std::floor(cfg.t_end / cfg.dt + 1e-9));
  const Index len = k_last + 1;

  SimResult res;
  res.dt = cfg.dt;
  res.tau = cfg.tau;
  res.t.resize(len);
  res.x.resize(n, len);
  res.x_hat.resize(n, len);
  res.v1.resize(d1, len);
  res.v2.resize(d2, len);
  res.u.resize(sys.p(), len);
  res.w.resize(sys.q(), len);
  res.err.resize(len);
  res.defined.assign(static_cast<std::size_t>(len), 0);

  HistoryBuffer phi_buf(obs.phi_dim(), n_tau);
  const double h = cfg.dt;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  auto deriv = [&](const Vec& x, const Vec& v1, const Vec& v2, const Vec& ut, const Vec& wt,
                   Vec& dx, Vec& dv1, Vec& dv2) {
    const Vec y = sys.C * x + sys.D * ut + sys.F * wt;
    dx = sys.A * x + sys.B * ut + sys.E * wt;
    dv1 = obs.b1.A * v1 + obs.b1.from_y * y + obs.b1.from_u * ut;
    dv2 = obs.b2.A * v2 + obs.b2.from_y * y + obs.b2.from_u * ut;
  };

  Vec k1x, k1v1, k1v2, k2x, k2v1, k2v2, k3x, k3v1, k3v2, k4x, k4v1, k4v2;
  for (Index k = 0; k < len; ++k) {
    const double tk = static_cast<double>(k) * h;
    const Vec ut = u_fn(tk);
    const Vec wt = w_fn(tk);
    const Vec yk = sys.C * xk + sys.D * ut + sys.F * wt;

    const Vec phi_now = obs.phi(v1k, v2k, yk, ut);
    const bool have_delay = phi_buf.warm();
    const bool is_defined = !obs.needs_delay() || have_delay;
    const Vec xh = obs.estimate(phi_now, phi_buf.delayed(), yk, ut, have_delay);

    res.t(k) = tk;
    res.x.col(k) = xk;
    res.x_hat.col(k) = xh;
    res.v1.col(k) = v1k;
    res.v2.col(k) = v2k;
    res.u.col(k) = ut;
    res.w.col(k) = wt;
    res.defined[static_cast<std::size_t>(k)] = is_defined ? 1 : 0;
    res.err(k) = is_defined ? (xh - xk).norm() : nan;

    const double state_norm = std::max({xk.norm(), v1k.norm(), v2k.norm()});
    if (!(state_norm <= 1e12)) {
      std::ostringstream msg;
      msg << "simulate: state norm " << state_norm << " exceeded 1e12 at t = " << tk;
      throw Divergence(msg.str());
    }

    phi_buf.push(phi_now);
    if (k + 1 == len) break;

    const Vec um = u_fn(tk + 0.5 * h);
    const Vec wm = w_fn(tk + 0.5 * h);
    const Vec ue = u_fn(tk + h);
    const Vec we = w_fn(tk + h);

    deriv(xk, v1k, v2k, ut, wt, k1x, k1v1, k1v2);
    deriv(xk + 0.5 * h * k1x, v1k + 0.5 * h * k1v1, v2k + 0.5 * h * k1v2, um, wm, k2x, k2v1, k2v2);
    deriv(xk + 0.5 * h * k2x, v1k + 0.5 * h * k2v1, v2k + 0.5 * h * k2v2, um, wm, k3x, k3v1, k3v2);
    deriv(xk + h * k3x, v1k + h * k3v1, v2k + h * k3v2, ue, we, k4x, k4v1, k4v2);

    xk += (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    v1k += (h / 6.0) * (k1v1 + 2.0 * k2v1 + 2.0 * k3v1 + k4v1);
    v2k += (h / 6.0) * (k1v2 + 2.0 * k2v2 + 2.0 * k3v2 + k4v2);
  }
  return res;
}

SimResult simulate(const LtiSystem& sys, const PairwiseObserverRealization& obs,
                   const SignalSpec& u, const SignalSpec& w, const SimConfig& cfg) {
  if (u.dim != sys.p()) throw ConfigError("simulate: input signal dimension mismatch");
  if (w.dim != sys.q()) throw ConfigError("simulate: unknown-input signal dimension mismatch");
  return simulate(sys, obs, make_signal(u), make_signal(w), cfg);
}

bool verify_appointed_time(const SimResult& res, double tau, double tol) {
  if (res.steps() == 0 || !(res.dt > 0.0)) return false;
  const auto k_tau = static_cast<Index>(std::llround(tau / res.dt));
  if (k_tau < 0 || k_tau >= res.steps()) return false;

  for (Index k = k_tau; k < res.steps(); ++k) {
    const double rel =
        (res.x_hat.col(k) - res.x.col(k)).norm() / (1.0 + res.x.col(k).norm());
    if (!(rel <= tol)) return false;
  }

  // The estimate must not already be exact one step before tau; otherwise the
  // trace does not demonstrate an appointed-time onset. Skipped when the
  // pre-tau value is undefined or the kind never needed the delay.
  const Index j = k_tau - 1;
  if (j >= 0 && res.defined[static_cast<std::size_t>(j)] == 0 && res.x_hat.col(j).allFinite()) {
    const double rel =
        (res.x_hat.col(j) - res.x.col(j)).norm() / (1.0 + res.x.col(j).norm());
    if (rel <= tol) return false;
  }
  return true;
}

void write_csv(std::ostream& os, const SimResult& res) {
  const Index n = res.x.rows();
  os << 't';
  for (Index i = 1; i <= n; ++i) os << ",x" << i;
  for (Index i = 1; i <= n; ++i) os << ",xhat" << i;
  os << ",err,defined\n";

  char buf[40];
  auto append = [&](double value) {
    std::snprintf(buf, sizeof buf, "%.17g", value);
    os << ',' << buf;
  };
  for (Index k = 0; k < res.steps(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", res.t(k));
    os << buf;
    for (Index i = 0; i < n; ++i) append(res.x(i, k));
    for (Index i = 0; i < n; ++i) append(res.x_hat(i, k));
    append(res.err(k));
    os << ',' << static_cast<int>(res.defined[static_cast<std::size_t>(k)]) << '\n';
  }
}

}  // namespace atobs
