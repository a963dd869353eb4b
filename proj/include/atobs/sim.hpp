#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "atobs/errors.hpp"
#include "atobs/matlib.hpp"
#include "atobs/synth.hpp"
#include "atobs/sysmodel.hpp"

namespace atobs {

enum class SignalKind {
  Zero,
  Step,
  Sinusoid,
  PiecewiseConstant,
  FilteredNoise,
};

const char* to_string(SignalKind kind);
SignalKind signal_kind_from_string(const std::string& name);

// Deterministic test signal description. Only the knobs of the selected kind
// are read; the rest are ignored. Every kind is bounded by |amplitude|.
struct SignalSpec {
  SignalKind kind = SignalKind::Zero;
  Index dim = 1;

  double amplitude = 1.0;
  double omega = 1.0;            // sinusoid angular frequency
  double phase = 0.0;            // sinusoid phase of the first component
  double step_time = 0.0;        // step turns on at this time
  double switch_interval = 1.0;  // piecewise-constant redraw spacing
  double cutoff = 1.0;           // filtered-noise low-pass corner
  double sample_dt = 1e-3;       // filtered-noise discretization step
  std::uint64_t seed = 1;        // seeds the random kinds
};

using SignalFn = std::function<Vec(double)>;

// Builds the callable for a spec. Deterministic: equal specs produce equal
// functions. The returned callable is cheap to rebuild and must not be shared
// across threads (filtered noise keeps a lazily grown sample cache).
SignalFn make_signal(const SignalSpec& spec);

struct SimConfig {
  double dt = 1e-3;
  double t_end = 10.0;
  double tau = 1.0;  // must sit on the step grid exactly

  Vec x0;             // empty means zero
  Vec observer_init;  // stacked [v1; v2] branch initial state, empty means zero

  std::uint64_t seed = 1;  // reserved for signal derivation by callers
};

// Fixed ring of past grid-aligned samples spanning exactly `span` steps.
// Starts zero filled, so delayed() returns the hold-zero sample until the
// first real sample from span pushes ago becomes available.
class HistoryBuffer {
 public:
  HistoryBuffer(Index dim, Index span);

  // Sample recorded `span` grid steps ago (zero until the buffer warmed up).
  const Vec& delayed() const { return ring_[head_]; }

  // Appends the sample for the current grid point and advances the ring.
  void push(const Vec& sample);

  Index span() const { return static_cast<Index>(ring_.size()); }
  bool warm() const { return pushed_ >= static_cast<Index>(ring_.size()); }

 private:
  std::vector<Vec> ring_;
  Index head_ = 0;
  Index pushed_ = 0;
};

// One simulated trajectory on the fixed grid t_k = k dt. Series are stored
// one column per grid point. x_hat columns are NaN wherever the observer kind
// cannot produce a value (the one-shot kind before tau); `defined` is 0 for
// every pre-tau point of a delay-based observer even when a hold-zero value
// is reported, because the exactness contract only starts at tau.
struct SimResult {
  double dt = 0.0;
  double tau = 0.0;

  Vec t;
  Mat x;      // plant state
  Mat x_hat;  // observer estimate
  Mat v1, v2; // branch states
  Mat u, w;   // signals as realized on the grid
  Vec err;    // ||x_hat - x||, NaN where the estimate is NaN
  std::vector<char> defined;  // 1 from tau on (always 1 for static kinds)

  Index steps() const { return t.size(); }
};

// Integrates plant and observer branches jointly with classical fourth-order
// Runge-Kutta at fixed step cfg.dt, sampling u and w at the substage times.
// The delayed phi stack is read from a grid-aligned ring buffer, never
// interpolated. Throws ConfigError when tau is off the grid, dimensions
// disagree, or the realization was built for a different tau; throws
// Divergence when any state norm exceeds 1e12.
SimResult simulate(const LtiSystem& sys, const PairwiseObserverRealization& obs,
                   const SignalSpec& u, const SignalSpec& w, const SimConfig& cfg);

// Same integrator driven by arbitrary callables, for signals no single spec
// expresses (sums of kinds, recorded data). The callables must return vectors
// of the plant's input dimensions (checked at t = 0) and be deterministic in
// t if reproducible output is wanted.
SimResult simulate(const LtiSystem& sys, const PairwiseObserverRealization& obs,
                   const SignalFn& u, const SignalFn& w, const SimConfig& cfg);

// True iff the relative error ||x_hat - x|| / (1 + ||x||) stays within tol at
// every grid point from tau on, and the estimate was not already exact one
// step before tau. The onset check is skipped when the pre-tau estimate is
// undefined (NaN) or when the observer needs no delay at all.
bool verify_appointed_time(const SimResult& res, double tau, double tol);

// Writes `t,x1..xn,xhat1..xhatn,err,defined` rows with 17 significant digits.
// Equal results serialize to identical bytes.
void write_csv(std::ostream& os, const SimResult& res);

}  // namespace atobs
