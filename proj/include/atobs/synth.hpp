#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "atobs/errors.hpp"
#include "atobs/matlib.hpp"
#include "atobs/sysmodel.hpp"

namespace atobs {

enum class ObserverKind {
  FullNoUI,       // full-order pair, no unknown input
  MinimalDirect,  // minimal pair, one-shot linear solve of the stacked system
  MinimalNoUI,    // minimal pair, recursive delayed reconstruction
  FullUIO,        // full-order pair on the decoupled model
  ReducedUIO,     // reduced-order pair on the similarity-reduced model
  MinimalUIO,     // minimal pair on the decoupled model
};

const char* to_string(ObserverKind kind);
ObserverKind observer_kind_from_string(const std::string& name);

struct SynthesisConfig {
  double tau = 1.0;     // appointed reconstruction time, > 0
  double sigma = -1.0;  // spectral separator, < 0

  // Branch eigenvalues. Real parts must satisfy
  //   branch2 < sigma < branch1 < 0,
  // complex values must come in conjugate pairs, and empty lists request
  // deterministic automatic placement. bar1/bar2 fill the auxiliary blocks
  // of the minimal kinds (dimension = decoupled output rank).
  std::vector<Complex> branch1_poles, branch2_poles;
  std::vector<Complex> bar1_poles, bar2_poles;

  Mat H1, H2;  // optional injection matrices; empty requests seeded random draws

  std::uint64_t seed = 1;
  double admissibility_margin = 1e-8;
};

// One stable branch of the pairwise observer:
//   v' = A v + from_y * y + from_u * u
// and the stacked reconstruction signal phi = [v; out_y * y + out_u * u].
struct BranchRealization {
  Mat A;
  Mat from_y, from_u;
  Mat out_y, out_u;   // extra measured rows of phi (may have zero rows)
  Mat Mhat;           // block diagonal of branch and auxiliary eigenstructure
  Mat exp_tau;        // expm(Mhat * tau)
  Mat U;              // assembly similarity applied to phi (identity for full kinds)
  Mat T;              // similarity solution of the synthesis equation (minimal kinds)

  Index dim() const { return A.rows(); }
  Index phi_dim() const { return A.rows() + out_y.rows(); }
};

// Two-branch observer with delayed exact reconstruction:
//   core(t)  = recon_D * [U1 (phi1(t) - exp1 phi1(t - tau)); U2 (phi2(t) - exp2 phi2(t - tau))]
//   x_hat(t) = static_state * core(t) + static_y * y(t) + static_u * u(t).
// The direct kind instead solves the stacked linear system whose inverse rows
// are cached in a0_inv_rows. Degenerate plants (output already determines the
// state) collapse to the pure static map with zero branch dimensions.
struct PairwiseObserverRealization {
  ObserverKind kind = ObserverKind::MinimalNoUI;
  double tau = 0.0;
  Index nx = 0, ny = 0, nu = 0;  // plant state/output/input dimensions

  BranchRealization b1, b2;
  Mat recon_D;
  Mat static_state, static_y, static_u;

  // Direct kind only: cached top rows of the stacked system inverse and the
  // pieces needed to re-assemble the stack at a different tau.
  Mat a0_inv_rows;
  Mat direct_C;  // compressed output map entering the stack

  std::uint64_t seed_used = 0;

  bool needs_delay() const { return b1.dim() + b2.dim() > 0; }
  Index phi_dim() const { return b1.phi_dim() + b2.phi_dim(); }

  // Assembles phi = [phi1; phi2] from branch states and measurements.
  Vec phi(const Vec& v1, const Vec& v2, const Vec& y, const Vec& u) const;

  // Exact state estimate from current and tau-delayed phi stacks. For the
  // direct kind phi_delayed must be a real sample (NaNs are returned when the
  // delayed sample is flagged unavailable).
  Vec estimate(const Vec& phi_now, const Vec& phi_delayed, const Vec& y, const Vec& u,
               bool delayed_available) const;
};

// Plants without unknown input; C may be row-rank deficient (it is compressed
// internally and all returned maps act on the original y).
PairwiseObserverRealization synth_minimal_noui(const Mat& a, const Mat& b, const Mat& c,
                                               const Mat& d, const SynthesisConfig& cfg);
PairwiseObserverRealization synth_minimal_direct(const Mat& a, const Mat& b, const Mat& c,
                                                 const Mat& d, const SynthesisConfig& cfg);
PairwiseObserverRealization synth_full_noui(const Mat& a, const Mat& b, const Mat& c,
                                            const Mat& d, const SynthesisConfig& cfg);

// Unknown-input kinds, built on the reconfigured models.
PairwiseObserverRealization synth_uio_full(const EtaModel& model, const SynthesisConfig& cfg);
PairwiseObserverRealization synth_uio_reduced(const PsiModel& model, const SynthesisConfig& cfg);
PairwiseObserverRealization synth_uio_minimal(const EtaModel& model, const SynthesisConfig& cfg);
PairwiseObserverRealization synth_uio_minimal(const BreveModel& model, const SynthesisConfig& cfg);

// Reciprocal condition number of the delayed reconstruction system evaluated
// at an arbitrary appointed time (1 = perfectly conditioned, 0 = singular).
double admissibility(const PairwiseObserverRealization& obs, double tau);

// Structured-text (JSON) serialization; round-trips bit-exactly.
std::string serialize_realization(const PairwiseObserverRealization& obs);
PairwiseObserverRealization deserialize_realization(const std::string& text);
void save_realization(const PairwiseObserverRealization& obs, const std::string& path);
PairwiseObserverRealization load_realization(const std::string& path);

}  // namespace atobs
