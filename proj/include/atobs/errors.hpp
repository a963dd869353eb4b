#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace atobs {

// Base for everything thrown by the toolkit so callers can catch one type.
struct ToolkitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Eigenvalue sets of the two Sylvester operands are too close for a unique solution.
struct SpectraOverlap : ToolkitError {
  using ToolkitError::ToolkitError;
};

// No stabilizing solution of the quadratic matrix equation (pair not stabilizable,
// or an eigenvalue of the associated Hamiltonian sits on the imaginary axis).
struct NotStabilizable : ToolkitError {
  using ToolkitError::ToolkitError;
};

// A factorization was requested of an (effectively) zero matrix.
struct ZeroMatrix : ToolkitError {
  using ToolkitError::ToolkitError;
};

// One of the structural rank conditions on (A, E, C, F) fails.
struct AssumptionViolated : ToolkitError {
  using ToolkitError::ToolkitError;
};

// The decoupled output already determines the full state; the minimal
// observer degenerates and the caller should use the static reconstruction.
struct TrivialCase : ToolkitError {
  using ToolkitError::ToolkitError;
};

// The unknown input does not actually enter the dynamics after decoupling.
struct ZeroUnknownInput : ToolkitError {
  using ToolkitError::ToolkitError;
};

// Observability of the relevant pair fails (PBH test).
struct NotObservable : ToolkitError {
  using ToolkitError::ToolkitError;
};

// The stacked similarity matrix [T; C] stayed singular after resampling.
struct StackSingular : ToolkitError {
  using ToolkitError::ToolkitError;
};

// Requested observer eigenvalues collide with plant eigenvalues.
struct EigenvalueClash : ToolkitError {
  using ToolkitError::ToolkitError;
};

// Full-order gain placement failed (similarity solution stayed singular).
struct PlacementFailed : ToolkitError {
  using ToolkitError::ToolkitError;
};

// Bad or inconsistent configuration input.
struct ConfigError : ToolkitError {
  using ToolkitError::ToolkitError;
};

// Simulated state left the admissible range.
struct Divergence : ToolkitError {
  using ToolkitError::ToolkitError;
};

// An internal hard postcondition (construction identity) failed numerically.
struct NumericCheckFailed : ToolkitError {
  using ToolkitError::ToolkitError;
};

// The appointed time makes the reconstruction matrix numerically singular.
// Carries the measured reciprocal condition number and nearby admissible
// choices of tau (possibly empty when tau itself is not positive).
struct TauInadmissible : ToolkitError {
  double tau = 0.0;
  double rcond = 0.0;
  std::vector<double> suggested_taus;

  TauInadmissible(const std::string& msg, double tau_in, double rcond_in,
                  std::vector<double> suggestions)
      : ToolkitError(msg), tau(tau_in), rcond(rcond_in),
        suggested_taus(std::move(suggestions)) {}
};

}  // namespace atobs
