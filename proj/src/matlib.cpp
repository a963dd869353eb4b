#include "atobs/matlib.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/Jacobi>

namespace atobs {

namespace {

void require_square(const Mat& m, const char* name) {
  if (m.rows() != m.cols()) {
    throw std::invalid_argument(std::string(name) + " must be square, got " +
                                std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

Mat vstack(const Mat& top, const Mat& bottom) {
  Mat out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

Index rank_of_complex(const CMat& m, double rel_tol = kRankRelTol) {
  if (m.rows() == 0 || m.cols() == 0) return 0;
  Eigen::JacobiSVD<CMat> svd(m);
  const Vec sv = svd.singularValues();
  const double cutoff = rel_tol * sv(0);
  Index r = 0;
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) ++r;
  }
  return r;
}

}  // namespace

double Spectrum::max_real() const {
  double v = -std::numeric_limits<double>::infinity();
  for (const auto& ev : eigenvalues) v = std::max(v, ev.real());
  return v;
}

double Spectrum::min_real() const {
  double v = std::numeric_limits<double>::infinity();
  for (const auto& ev : eigenvalues) v = std::min(v, ev.real());
  return v;
}

Mat pinv(const Mat& m, double rel_tol) {
  if (rel_tol <= 0 || rel_tol >= 1) {
    throw std::invalid_argument("pinv: rel_tol must lie in (0, 1)");
  }
  if (m.rows() == 0 || m.cols() == 0) return Mat::Zero(m.cols(), m.rows());

  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& sv = svd.singularValues();
  const double cutoff = rel_tol * sv(0);

  Mat out = Mat::Zero(m.cols(), m.rows());
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) {
      out.noalias() += svd.matrixV().col(i) * (1.0 / sv(i)) * svd.matrixU().col(i).transpose();
    }
  }
  return out;
}

Mat expm(const Mat& m) {
  require_square(m, "expm argument");
  const Index n = m.rows();
  if (n == 0) return m;

  // Scale so the 1-norm is at most 0.5, apply the (13,13) Pade approximant,
  // then undo the scaling by repeated squaring.
  const double norm1 = m.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > 0.5) {
    squarings = static_cast<int>(std::ceil(std::log2(norm1 / 0.5)));
  }
  const Mat a = m / std::ldexp(1.0, squarings);

  static const double b[14] = {
      64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
      1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
      33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0};

  const Mat ident = Mat::Identity(n, n);
  const Mat a2 = a * a;
  const Mat a4 = a2 * a2;
  const Mat a6 = a2 * a4;
  const Mat u = a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) +
                     b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident);
  const Mat v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) +
                b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident;

  Mat r = (v - u).partialPivLu().solve(v + u);
  for (int i = 0; i < squarings; ++i) r = r * r;
  return r;
}

Mat solve_sylvester(const Mat& a, const Mat& b, const Mat& c) {
  require_square(a, "sylvester operand a");
  require_square(b, "sylvester operand b");
  const Index k = a.rows();
  const Index l = b.rows();
  if (c.rows() != l || c.cols() != k) {
    throw std::invalid_argument("solve_sylvester: c must be " + std::to_string(l) + "x" +
                                std::to_string(k));
  }
  if (k == 0 || l == 0) return Mat::Zero(l, k);

  // Uniqueness requires disjoint spectra.
  const Spectrum sa = spectrum(a);
  const Spectrum sb = spectrum(b);
  const double scale = std::max({1.0, a.norm(), b.norm()});
  double gap = std::numeric_limits<double>::infinity();
  for (const auto& la : sa.eigenvalues) {
    for (const auto& lb : sb.eigenvalues) {
      gap = std::min(gap, std::abs(la - lb));
    }
  }
  if (gap < 1e-9 * scale) {
    throw SpectraOverlap("solve_sylvester: eigenvalue gap " + std::to_string(gap) +
                         " between operands is too small");
  }

  // Column-major vectorization: vec(X a) = (a^T (x) I) vec(X), vec(b X) = (I (x) b) vec(X).
  Mat sys = Mat::Zero(l * k, l * k);
  for (Index j = 0; j < k; ++j) {
    for (Index i = 0; i < k; ++i) {
      if (a(i, j) != 0.0) {
        sys.block(j * l, i * l, l, l).diagonal().array() += a(i, j);
      }
    }
    sys.block(j * l, j * l, l, l) -= b;
  }
  const Eigen::Map<const Vec> rhs(c.data(), l * k);
  const Vec xv = sys.colPivHouseholderQr().solve(rhs);
  const Mat x = Eigen::Map<const Mat>(xv.data(), l, k);

  const double residual = (x * a - b * x - c).norm();
  if (!(residual <= 1e-9 * (1.0 + c.norm()))) {
    throw NumericCheckFailed("solve_sylvester: residual " + std::to_string(residual) +
                             " exceeds tolerance");
  }
  return x;
}

namespace {

// Swaps the diagonal entries k and k+1 of the complex Schur form t by a
// unitary similarity, accumulating the transformation into u.
void swap_schur_diagonal(CMat& t, CMat& u, Index k) {
  const Complex l1 = t(k, k);
  const Complex l2 = t(k + 1, k + 1);
  const Complex x = t(k, k + 1);
  // Eigenvector of [[l1, x], [0, l2]] for l2 is (x, l2 - l1); rotate it to e1.
  Eigen::JacobiRotation<Complex> g;
  g.makeGivens(x, l2 - l1);
  t.applyOnTheLeft(k, k + 1, g.adjoint());
  t.applyOnTheRight(k, k + 1, g);
  u.applyOnTheRight(k, k + 1, g);
  t(k + 1, k) = Complex(0, 0);
  t(k, k) = l2;
  t(k + 1, k + 1) = l1;
}

}  // namespace

std::pair<Mat, Mat> stabilizing_lmi_pair(const Mat& a, const Mat& b) {
  require_square(a, "lmi pair operand a");
  const Index n = a.rows();
  if (b.rows() != n) {
    throw std::invalid_argument("stabilizing_lmi_pair: b must have " + std::to_string(n) +
                                " rows");
  }
  if (n == 0) return {Mat(), Mat()};

  Mat ham(2 * n, 2 * n);
  ham.topLeftCorner(n, n) = a;
  ham.topRightCorner(n, n) = -b * b.transpose();
  ham.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
  ham.bottomRightCorner(n, n) = -a.transpose();

  Eigen::ComplexSchur<CMat> schur(ham.cast<Complex>());
  if (schur.info() != Eigen::Success) {
    throw NumericCheckFailed("stabilizing_lmi_pair: Schur decomposition failed");
  }
  CMat t = schur.matrixT();
  CMat u = schur.matrixU();

  const double axis_tol = 1e-9 * std::max(1.0, ham.norm());
  Index stable = 0;
  for (Index i = 0; i < 2 * n; ++i) {
    const double re = t(i, i).real();
    if (std::abs(re) <= axis_tol) {
      throw NotStabilizable("stabilizing_lmi_pair: Hamiltonian eigenvalue on the imaginary axis");
    }
    if (re < 0) ++stable;
  }
  if (stable != n) {
    throw NotStabilizable("stabilizing_lmi_pair: expected " + std::to_string(n) +
                          " stable Hamiltonian eigenvalues, found " + std::to_string(stable));
  }

  // Bubble the stable eigenvalues to the leading diagonal block.
  bool moved = true;
  while (moved) {
    moved = false;
    for (Index k = 0; k + 1 < 2 * n; ++k) {
      if (t(k, k).real() > 0 && t(k + 1, k + 1).real() < 0) {
        swap_schur_diagonal(t, u, k);
        moved = true;
      }
    }
  }

  const CMat x1 = u.block(0, 0, n, n);
  const CMat x2 = u.block(n, 0, n, n);
  Eigen::JacobiSVD<CMat> svd_x1(x1);
  const Vec sv = svd_x1.singularValues();
  if (sv(0) <= 0 || sv(sv.size() - 1) / sv(0) < 1e-12) {
    throw NotStabilizable("stabilizing_lmi_pair: stable invariant subspace is not a graph");
  }

  const CMat pc = x1.transpose().colPivHouseholderQr().solve(x2.transpose()).transpose();
  Mat p = pc.real();
  p = 0.5 * (p + p.transpose()).eval();

  // Hard postconditions: p solves the quadratic equation and its inverse
  // satisfies the strict matrix inequality.
  const Mat bbt = b * b.transpose();
  const double res = (a.transpose() * p + p * a + Mat::Identity(n, n) - p * bbt * p).norm();
  const double p_scale = 1.0 + p.norm();
  if (!(res <= 1e-6 * p_scale * p_scale)) {
    throw NumericCheckFailed("stabilizing_lmi_pair: equation residual " + std::to_string(res));
  }
  Eigen::SelfAdjointEigenSolver<Mat> es_p(p);
  if (es_p.eigenvalues().minCoeff() <= 0) {
    throw NotStabilizable("stabilizing_lmi_pair: solution is not positive definite");
  }

  Mat q = p.partialPivLu().solve(Mat::Identity(n, n));
  q = 0.5 * (q + q.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es_lmi(a * q + q * a.transpose() - 2.0 * bbt);
  if (es_lmi.eigenvalues().maxCoeff() >= 0) {
    throw NumericCheckFailed("stabilizing_lmi_pair: inequality check failed");
  }
  return {q, p};
}

RankReport rank_of(const Mat& m, double rel_tol) {
  if (rel_tol <= 0 || rel_tol >= 1) {
    throw std::invalid_argument("rank_of: rel_tol must lie in (0, 1)");
  }
  RankReport report;
  if (m.rows() == 0 || m.cols() == 0) {
    report.tolerance_used = rel_tol;
    return report;
  }
  Eigen::JacobiSVD<Mat> svd(m);
  report.singular_values = svd.singularValues();
  const double sv_max = report.singular_values(0);
  report.tolerance_used = sv_max > 0 ? rel_tol * sv_max : rel_tol;
  for (Index i = 0; i < report.singular_values.size(); ++i) {
    if (report.singular_values(i) > report.tolerance_used) ++report.rank;
  }
  return report;
}

std::pair<Mat, Mat> full_column_factor(const Mat& m) {
  if (m.rows() == 0 || m.cols() == 0) {
    throw ZeroMatrix("full_column_factor: empty matrix");
  }
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& sv = svd.singularValues();
  const double cutoff = kRankRelTol * sv(0);
  Index r = 0;
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) ++r;
  }
  if (r == 0) throw ZeroMatrix("full_column_factor: matrix has rank 0");

  const Mat m0 = svd.matrixU().leftCols(r);
  const Mat m1 = sv.head(r).asDiagonal() * svd.matrixV().leftCols(r).transpose();
  return {m0, m1};
}

std::pair<Mat, Mat> row_basis_selector(const Mat& m) {
  const Index total = rank_of(m).rank;
  if (total == 0) throw ZeroMatrix("row_basis_selector: matrix has rank 0");

  std::vector<Index> picked;
  Mat stacked(0, m.cols());
  for (Index i = 0; i < m.rows() && static_cast<Index>(picked.size()) < total; ++i) {
    const Mat candidate = vstack(stacked, m.row(i));
    if (rank_of(candidate).rank > static_cast<Index>(picked.size())) {
      picked.push_back(i);
      stacked = candidate;
    }
  }

  Mat selector = Mat::Zero(static_cast<Index>(picked.size()), m.rows());
  for (Index k = 0; k < static_cast<Index>(picked.size()); ++k) {
    selector(k, picked[static_cast<size_t>(k)]) = 1.0;
  }
  return {stacked, selector};
}

Spectrum spectrum(const Mat& m) {
  require_square(m, "spectrum argument");
  Spectrum out;
  if (m.rows() == 0) return out;
  Eigen::EigenSolver<Mat> es(m, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw NumericCheckFailed("spectrum: eigenvalue iteration failed");
  }
  out.eigenvalues.resize(static_cast<size_t>(m.rows()));
  for (Index i = 0; i < m.rows(); ++i) {
    out.eigenvalues[static_cast<size_t>(i)] = es.eigenvalues()(i);
  }
  std::sort(out.eigenvalues.begin(), out.eigenvalues.end(), [](const Complex& a, const Complex& b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  return out;
}

bool check_spectral_separation(const Mat& m1, const Mat& m2, double sigma) {
  if (sigma >= 0) {
    throw std::invalid_argument("check_spectral_separation: sigma must be negative");
  }
  for (const auto& ev : spectrum(m1).eigenvalues) {
    if (!(ev.real() > sigma && ev.real() < 0)) return false;
  }
  for (const auto& ev : spectrum(m2).eigenvalues) {
    if (!(ev.real() < sigma)) return false;
  }
  return true;
}

bool rosenbrock_rank_condition(const Mat& a, const Mat& e, const Mat& c, const Mat& f) {
  require_square(a, "rosenbrock operand a");
  const Index n = a.rows();
  const Index m = c.rows();
  const Index q = e.cols();
  if (c.cols() != n || e.rows() != n || f.rows() != m || f.cols() != q) {
    throw std::invalid_argument("rosenbrock_rank_condition: inconsistent dimensions");
  }

  const Index target = n + rank_of(vstack(e, f)).rank;

  std::vector<Complex> candidates;
  candidates.emplace_back(0.0, 0.0);
  for (const auto& ev : spectrum(a).eigenvalues) candidates.push_back(ev);

  // The decoupled state matrix contributes the remaining structural candidates.
  const Mat fp = pinv(f);
  const Mat c_bar = (Mat::Identity(m, m) - f * fp) * c;
  const Mat e_bar = e * (Mat::Identity(q, q) - fp * f);
  const Mat a_bar = a - e * fp * c;
  const Mat g = Mat::Identity(n, n) - e_bar * pinv(c_bar * e_bar) * c_bar;
  for (const auto& ev : spectrum(g * a_bar).eigenvalues) candidates.push_back(ev);

  // Fixed-seed probes over a disk comfortably containing the spectrum.
  std::mt19937_64 rng(0x9e3779b97f4a7c15ull);
  const double radius = 10.0 * std::max(1.0, a.norm());
  auto unit = [&rng]() {
    return static_cast<double>(rng() >> 11) * 0x1p-53;
  };
  for (int i = 0; i < 32; ++i) {
    const double r = radius * std::sqrt(unit());
    const double phi = 2.0 * M_PI * unit();
    candidates.emplace_back(r * std::cos(phi), r * std::sin(phi));
  }

  CMat pencil(n + m, n + q);
  pencil.topRightCorner(n, q) = e.cast<Complex>();
  pencil.bottomLeftCorner(m, n) = c.cast<Complex>();
  pencil.bottomRightCorner(m, q) = f.cast<Complex>();
  for (const auto& s : candidates) {
    pencil.topLeftCorner(n, n) = a.cast<Complex>() - s * CMat::Identity(n, n);
    if (rank_of_complex(pencil) < target) return false;
  }
  return true;
}

}  // namespace atobs
