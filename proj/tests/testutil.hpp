#pragma once

// Shared helpers for the test binaries: deterministic random data, random
// plant generators, and the bundled third-order demo plant used across suites.

#include <random>

#include "atobs/matlib.hpp"
#include "atobs/sysmodel.hpp"

namespace testutil {

// Uniform draw in [0, 1) from the raw 64-bit stream, identical on every platform.
inline double unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1p-53;
}

// Uniform draw in [-1, 1].
inline double sym_unit(std::mt19937_64& rng) { return 2.0 * unit(rng) - 1.0; }

inline atobs::Mat random_mat(std::mt19937_64& rng, atobs::Index rows, atobs::Index cols,
                             double scale = 1.0) {
  atobs::Mat m(rows, cols);
  for (atobs::Index i = 0; i < rows; ++i) {
    for (atobs::Index j = 0; j < cols; ++j) {
      m(i, j) = scale * sym_unit(rng);
    }
  }
  return m;
}

// Random matrix of exact rank r (product of full-rank factors).
inline atobs::Mat random_rank_mat(std::mt19937_64& rng, atobs::Index rows, atobs::Index cols,
                                  atobs::Index r) {
  return random_mat(rng, rows, r) * random_mat(rng, r, cols);
}

// Random plant with observable (A, C) and no unknown input, n_max >= 2.
inline atobs::LtiSystem random_observable_system(std::mt19937_64& rng, atobs::Index n_max = 6) {
  while (true) {
    const atobs::Index n = 2 + static_cast<atobs::Index>(rng() % static_cast<std::uint64_t>(n_max - 1));
    const atobs::Index m = 1 + static_cast<atobs::Index>(rng() % static_cast<std::uint64_t>(n - 1));
    const atobs::Index p = 1 + static_cast<atobs::Index>(rng() % 2);
    atobs::Mat a = random_mat(rng, n, n);
    atobs::Mat c = random_mat(rng, m, n);
    if (!atobs::pbh_observable(a, c)) continue;
    return atobs::LtiSystem::without_unknown_input(a, random_mat(rng, n, p), c,
                                                   random_mat(rng, m, p));
  }
}

// Random plant satisfying the unknown-input rank conditions with a nonzero
// residual unknown-input direction and a non-trivial decoupled output.
// The unknown input is split into a dynamics-only part (zero F columns) and,
// when room permits, a column that also feeds through to the output.
inline atobs::LtiSystem random_uio_system(std::mt19937_64& rng) {
  while (true) {
    const atobs::Index n = 3 + static_cast<atobs::Index>(rng() % 4);
    const atobs::Index m = 2 + static_cast<atobs::Index>(rng() % static_cast<std::uint64_t>(n - 2));
    const atobs::Index qf = (m >= 3 && (rng() & 1u)) ? 1 : 0;
    const atobs::Index qe_room = m - 1 - qf;
    const atobs::Index qe = 1 + static_cast<atobs::Index>(rng() % static_cast<std::uint64_t>(qe_room));
    const atobs::Index q = qe + qf;
    const atobs::Index p = 1 + static_cast<atobs::Index>(rng() % 2);

    atobs::Mat a = random_mat(rng, n, n);
    atobs::Mat c = random_mat(rng, m, n);
    atobs::Mat e(n, q);
    e.leftCols(qe) = random_mat(rng, n, qe);
    atobs::Mat f = atobs::Mat::Zero(m, q);
    if (qf > 0) {
      e.rightCols(qf) = random_mat(rng, n, qf);
      f.rightCols(qf) = random_mat(rng, m, qf);
    }
    atobs::LtiSystem sys(a, random_mat(rng, n, p), e, c, random_mat(rng, m, p), f);
    const atobs::AssumptionReport rep = atobs::check_assumptions(sys);
    if (rep.admissible() && !rep.trivial_case) return sys;
  }
}

// Third-order single-input demo plant used by the bundled consensus scenario.
inline atobs::Mat demo3_state() {
  atobs::Mat a(3, 3);
  a << 0, 1, 0,
       1, -1, 1,
       0, -8, 1;
  return a;
}

inline atobs::Mat demo3_input() {
  atobs::Mat b(3, 1);
  b << 0, 0, 1;
  return b;
}

inline atobs::Mat demo3_output() {
  atobs::Mat c(2, 3);
  c << 1, 0, 0,
       0, 0, 1;
  return c;
}

}  // namespace testutil
