#pragma once

#include <complex>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "atobs/errors.hpp"

namespace atobs {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using Complex = std::complex<double>;
using Index = Eigen::Index;

// Relative singular value cutoff shared by all rank decisions.
inline constexpr double kRankRelTol = 1e-9;

struct Spectrum {
  // Sorted by (real, imaginary) so output is deterministic; closed under conjugation.
  std::vector<Complex> eigenvalues;

  double max_real() const;
  double min_real() const;
};

struct RankReport {
  Index rank = 0;
  Vec singular_values;        // nonincreasing
  double tolerance_used = 0;  // absolute cutoff actually applied
};

// Moore-Penrose pseudoinverse. Singular values below rel_tol * sigma_max are
// treated as zero; a zero matrix maps to the zero matrix of transposed shape.
Mat pinv(const Mat& m, double rel_tol = kRankRelTol);

// Matrix exponential, scaling-and-squaring with a degree 13 Pade approximant.
// The argument is scaled so its 1-norm is at most 0.5 before approximation.
Mat expm(const Mat& m);

// Unique solution X of  X a - b X = c  with a (k x k), b (l x l), c (l x k).
// Solved as one dense linear system through the Kronecker vectorization
// (a^T (x) I - I (x) b) vec(X) = vec(c). Throws SpectraOverlap when the
// spectra of a and b come too close for the solution to be well defined.
Mat solve_sylvester(const Mat& a, const Mat& b, const Mat& c);

// Returns (Q, P) with Q symmetric positive definite, P = Q^{-1}, and
// a Q + Q a^T - 2 b b^T negative definite. Computed from the stabilizing
// solution of a^T P + P a + I - P b b^T P = 0 via an ordered Schur
// decomposition of the Hamiltonian matrix. Throws NotStabilizable when no
// such solution exists.
std::pair<Mat, Mat> stabilizing_lmi_pair(const Mat& a, const Mat& b);

// Numerical rank from singular values with a relative cutoff.
RankReport rank_of(const Mat& m, double rel_tol = kRankRelTol);

// Thin factorization m = m0 * m1 with m0 of full column rank r = rank(m) and
// m1 of full row rank, from the SVD. Throws ZeroMatrix when rank(m) == 0.
std::pair<Mat, Mat> full_column_factor(const Mat& m);

// Greedy (top-down) selection of a row basis: returns (m0, m1) where m1 is a
// 0/1 selection matrix, m0 = m1 * m stacks the selected rows, and
// rank(m0) = rank(m). Throws ZeroMatrix when rank(m) == 0.
std::pair<Mat, Mat> row_basis_selector(const Mat& m);

Spectrum spectrum(const Mat& m);

// True iff every eigenvalue of m2 has real part < sigma and every eigenvalue
// of m1 has real part in (sigma, 0). Both matrices Hurwitz by implication.
bool check_spectral_separation(const Mat& m1, const Mat& m2, double sigma);

// Decides whether rank [a - s I, e; c, f] == n + rank [e; f] for all complex
// s. The pencil only has to be probed where its rank can drop, so the check
// evaluates the candidate set: eigenvalues of a, eigenvalues of the
// output-decoupled state matrix, s = 0, and a fixed set of pseudo-random
// points in a disk of radius 10 * max(1, ||a||).
bool rosenbrock_rank_condition(const Mat& a, const Mat& e, const Mat& c, const Mat& f);

}  // namespace atobs
