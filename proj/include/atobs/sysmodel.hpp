#pragma once

#include "atobs/errors.hpp"
#include "atobs/matlib.hpp"

namespace atobs {

// Linear time-invariant plant
//   x' = A x + B u + E w
//   y  = C x + D u + F w
// with known input u (p), unknown input w (q), and output y (m). E and F may
// be empty (q = 0) when there is no unknown input channel.
struct LtiSystem {
  Mat A, B, E, C, D, F;

  LtiSystem(Mat a, Mat b, Mat e, Mat c, Mat d, Mat f);
  static LtiSystem without_unknown_input(Mat a, Mat b, Mat c, Mat d);

  Index n() const { return A.rows(); }
  Index p() const { return B.cols(); }
  Index q() const { return E.cols(); }
  Index m() const { return C.rows(); }

  bool has_unknown_input() const { return q() > 0 && (!E.isZero(0) || !F.isZero(0)); }
};

struct AssumptionReport {
  bool cond1_holds = false;          // rank [0, F; F, CE] == rank F + rank [E; F]
  bool cond2_holds = false;          // pencil rank condition for all s
  bool observability_holds = false;  // PBH test of the decoupled pair
  Index rank_CF = 0;                 // rank [C, F]
  Index rank_EF = 0;                 // rank [E; F]
  Index rank_F = 0;
  bool trivial_case = false;         // decoupled output already determines x

  bool admissible() const { return cond1_holds && cond2_holds && observability_holds; }
};

// Unknown-input-free realization of the full state: with eta = G x,
//   eta' = A_eta eta + H y + B_bar u,      x = eta + correction_y y + correction_u u.
// C0 selects a row basis of C_bar (C0 = C1 * C_bar) and C_hat maps measured
// output to the decoupled output: C_bar x = C_hat (y - D u).
struct EtaModel {
  Mat G;             // n x n projector-like decoupling map, G E_bar = 0
  Mat A_eta;         // n x n (G times the F-corrected state matrix)
  Mat H;             // n x m
  Mat B_bar;         // n x p
  Mat C_bar;         // m x n
  Mat C_hat;         // m x m
  Mat C0;            // r x n row basis of C_bar
  Mat C1;            // r x m 0/1 selector with C0 = C1 * C_bar
  Mat E_bar;         // n x q residual unknown-input direction
  Mat correction_y;  // n x m
  Mat correction_u;  // n x p
  Mat D;             // feedthrough copied from the plant for downstream wiring
};

// Reduced unknown-input-free realization: with psi = T1 x,
//   psi' = A_psi psi + H_hat y + B_hat_bar u,
//   x    = correction_state psi + correction_y y + correction_u u,
// and the unknown-input-free output channel  U1_out Fperp (y - D u) = (U1_out C_bar T0) psi.
struct PsiModel {
  Mat T1;                // (n - re) x n
  Mat A_psi;             // (n - re) x (n - re)
  Mat H_hat;             // (n - re) x m
  Mat B_hat_bar;         // (n - re) x p
  Mat U1_out;            // (m - re) x m output compression
  Mat T0;                // n x (n - re)
  Mat E0;                // n x re thin factor of E_bar
  Mat U2;                // re x m
  Mat C_bar;             // m x n (copied for downstream wiring)
  Mat Fperp;             // m x m, I - F F^+
  Mat correction_state;  // n x (n - re)
  Mat correction_y;      // n x m
  Mat correction_u;      // n x p
  Mat D;
};

// Specialization for F = 0 with full-row-rank C: with eta = G_breve x,
//   eta' = A_breve eta + H_breve y + B_breve u,  x = eta + correction_y y + correction_u u,
// and C_hat_breve (y - D u) = C eta.
struct BreveModel {
  Mat G_breve;       // n x n, G_breve E = 0
  Mat A_breve;       // n x n
  Mat H_breve;       // n x m injection map
  Mat B_breve;       // n x p input map
  Mat C_hat_breve;   // m x m output map, I - CE (CE)^+
  Mat C;             // plant output map (full row rank), copied for wiring
  Mat correction_y;  // n x m
  Mat correction_u;  // n x p
  Mat D;
};

AssumptionReport check_assumptions(const LtiSystem& sys);

// Throws AssumptionViolated when the rank conditions fail and TrivialCase when
// the decoupled output already has full column rank (use the static map instead).
EtaModel reconfigure_eta(const LtiSystem& sys);

// Throws ZeroUnknownInput when the residual unknown-input direction vanishes
// (nothing to reduce; the full-order route applies unchanged).
PsiModel reconfigure_psi(const LtiSystem& sys);

// Requires F = 0 and C of full row rank (row-compress the plant first otherwise).
BreveModel reconfigure_breve(const LtiSystem& sys);

// PBH rank test: (a, c) observable iff [a - s I; c] has full column rank at
// every eigenvalue s of a.
bool pbh_observable(const Mat& a, const Mat& c);

// Plant with C replaced by a row basis (D and F rows selected accordingly).
// selector satisfies compressed.C = selector * original.C.
struct RowCompressed {
  LtiSystem sys;
  Mat selector;
};
RowCompressed row_compress_outputs(const LtiSystem& sys);

}  // namespace atobs
