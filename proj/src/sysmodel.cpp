#include "atobs/sysmodel.hpp"

#include <algorithm>
#include <string>

namespace atobs {

namespace {

Mat vstack(const Mat& top, const Mat& bottom) {
  Mat out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

Mat hstack(const Mat& left, const Mat& right) {
  Mat out(left.rows(), left.cols() + right.cols());
  out.leftCols(left.cols()) = left;
  out.rightCols(right.cols()) = right;
  return out;
}

void check_numeric(bool ok, const std::string& what) {
  if (!ok) throw NumericCheckFailed("sysmodel: " + what);
}

// Completes the full-column-rank block `fixed` (n x r) to an invertible n x n
// matrix [chosen, fixed] using standard basis columns, greedily preferring
// columns that keep the stack well conditioned (condition number < 1e6).
Mat complete_basis(const Mat& fixed) {
  const Index n = fixed.rows();
  const Index r = fixed.cols();
  Mat chosen(n, 0);
  for (Index i = 0; i < n && chosen.cols() < n - r; ++i) {
    Mat cand(n, chosen.cols() + 1 + r);
    cand.leftCols(chosen.cols()) = chosen;
    cand.col(chosen.cols()) = Vec::Unit(n, i);
    cand.rightCols(r) = fixed;
    Eigen::JacobiSVD<Mat> svd(cand);
    const Vec sv = svd.singularValues();
    const bool full = sv(sv.size() - 1) > kRankRelTol * sv(0);
    const bool conditioned = sv(sv.size() - 1) > 1e-6 * sv(0);
    if (full && conditioned) {
      chosen.conservativeResize(n, chosen.cols() + 1);
      chosen.col(chosen.cols() - 1) = Vec::Unit(n, i);
    }
  }
  // Fall back on plain rank growth if the conditioning filter was too strict.
  for (Index i = 0; i < n && chosen.cols() < n - r; ++i) {
    Mat cand(n, chosen.cols() + 1 + r);
    cand.leftCols(chosen.cols()) = chosen;
    cand.col(chosen.cols()) = Vec::Unit(n, i);
    cand.rightCols(r) = fixed;
    if (rank_of(cand).rank == cand.cols()) {
      chosen.conservativeResize(n, chosen.cols() + 1);
      chosen.col(chosen.cols() - 1) = Vec::Unit(n, i);
    }
  }
  check_numeric(chosen.cols() == n - r, "basis completion failed");
  return chosen;
}

}  // namespace

LtiSystem::LtiSystem(Mat a, Mat b, Mat e, Mat c, Mat d, Mat f)
    : A(std::move(a)), B(std::move(b)), E(std::move(e)), C(std::move(c)), D(std::move(d)),
      F(std::move(f)) {
  const Index nn = A.rows();
  if (A.cols() != nn) throw ConfigError("system: A must be square");
  if (nn == 0) throw ConfigError("system: empty state dimension");
  if (B.rows() != nn) throw ConfigError("system: B must have n rows");
  if (E.rows() != nn) throw ConfigError("system: E must have n rows");
  if (C.cols() != nn) throw ConfigError("system: C must have n columns");
  if (C.rows() == 0) throw ConfigError("system: C must have at least one row");
  if (D.rows() != C.rows() || D.cols() != B.cols()) {
    throw ConfigError("system: D must be m x p");
  }
  if (F.rows() != C.rows() || F.cols() != E.cols()) {
    throw ConfigError("system: F must be m x q");
  }
}

LtiSystem LtiSystem::without_unknown_input(Mat a, Mat b, Mat c, Mat d) {
  const Index nn = a.rows();
  const Index mm = c.rows();
  return LtiSystem(std::move(a), std::move(b), Mat::Zero(nn, 0), std::move(c), std::move(d),
                   Mat::Zero(mm, 0));
}

bool pbh_observable(const Mat& a, const Mat& c) {
  const Index n = a.rows();
  if (c.rows() == 0) return n == 0;
  CMat stacked(n + c.rows(), n);
  stacked.bottomRows(c.rows()) = c.cast<Complex>();
  for (const auto& ev : spectrum(a).eigenvalues) {
    stacked.topRows(n) = a.cast<Complex>() - ev * CMat::Identity(n, n);
    Eigen::JacobiSVD<CMat> svd(stacked);
    const Vec sv = svd.singularValues();
    if (sv(sv.size() - 1) <= kRankRelTol * std::max(sv(0), 1.0)) return false;
  }
  return true;
}

AssumptionReport check_assumptions(const LtiSystem& sys) {
  const Index n = sys.n();
  const Index m = sys.m();
  const Index q = sys.q();

  AssumptionReport report;
  report.rank_F = rank_of(sys.F).rank;
  report.rank_EF = rank_of(vstack(sys.E, sys.F)).rank;
  report.rank_CF = rank_of(hstack(sys.C, sys.F)).rank;

  // First condition: the unknown input must show in the output consistently.
  Mat block(2 * m, 2 * q);
  block.topLeftCorner(m, q).setZero();
  block.topRightCorner(m, q) = sys.F;
  block.bottomLeftCorner(m, q) = sys.F;
  block.bottomRightCorner(m, q) = sys.C * sys.E;
  report.cond1_holds = rank_of(block).rank == report.rank_F + report.rank_EF;

  report.cond2_holds = rosenbrock_rank_condition(sys.A, sys.E, sys.C, sys.F);

  const Mat fp = pinv(sys.F);
  const Mat c_bar = (Mat::Identity(m, m) - sys.F * fp) * sys.C;
  const Mat e_bar = sys.E * (Mat::Identity(q, q) - fp * sys.F);
  const Mat a_bar = sys.A - sys.E * fp * sys.C;
  const Mat g = Mat::Identity(n, n) - e_bar * pinv(c_bar * e_bar) * c_bar;
  report.observability_holds = pbh_observable(g * a_bar, c_bar);
  report.trivial_case = rank_of(c_bar).rank == n;
  return report;
}

EtaModel reconfigure_eta(const LtiSystem& sys) {
  const AssumptionReport report = check_assumptions(sys);
  if (!report.cond1_holds || !report.cond2_holds) {
    throw AssumptionViolated("reconfigure_eta: unknown-input rank conditions fail");
  }
  if (report.trivial_case) {
    throw TrivialCase("reconfigure_eta: decoupled output has full column rank; "
                      "the state follows statically from y and u");
  }

  const Index n = sys.n();
  const Index m = sys.m();
  const Index q = sys.q();
  const Mat im = Mat::Identity(m, m);
  const Mat in = Mat::Identity(n, n);

  const Mat fp = pinv(sys.F);
  const Mat f_perp = im - sys.F * fp;  // annihilates the F channel
  EtaModel model;
  model.D = sys.D;
  model.C_bar = f_perp * sys.C;
  model.E_bar = sys.E * (Mat::Identity(q, q) - fp * sys.F);
  const Mat a_bar = sys.A - sys.E * fp * sys.C;
  const Mat b_hat = sys.B - sys.E * fp * sys.D;
  const Mat ce_pinv = pinv(model.C_bar * model.E_bar);
  model.G = in - model.E_bar * ce_pinv * model.C_bar;
  model.A_eta = model.G * a_bar;
  model.H = model.G * sys.E * fp + model.G * a_bar * model.E_bar * ce_pinv * f_perp;
  model.B_bar = model.G * b_hat - model.G * a_bar * model.E_bar * ce_pinv * f_perp * sys.D;
  model.C_hat = (im - model.C_bar * model.E_bar * ce_pinv) * f_perp;
  model.correction_y = model.E_bar * ce_pinv * f_perp;
  model.correction_u = -model.E_bar * ce_pinv * f_perp * sys.D;

  auto [c0, c1] = row_basis_selector(model.C_bar);
  model.C0 = c0;
  model.C1 = c1;

  // Hard construction identities; these must hold to rounding.
  const double scale = 1.0 + sys.A.norm() + sys.E.norm() + sys.C.norm();
  check_numeric((model.G * model.E_bar).norm() <= 1e-10 * scale * scale,
                "eta model does not annihilate the unknown-input direction");
  check_numeric((model.C0 - model.C1 * model.C_bar).norm() == 0,
                "row basis selector mismatch");
  // C_bar (G x) must be computable from measurements: C_bar G = C_hat C, C_hat F = 0.
  check_numeric((model.C_bar * model.G - model.C_hat * sys.C).norm() <= 1e-10 * scale * scale,
                "decoupled output map disagrees with the measurement route");
  check_numeric((model.C_hat * sys.F).norm() <= 1e-10 * scale * scale,
                "decoupled output map leaks the unknown input");
  return model;
}

PsiModel reconfigure_psi(const LtiSystem& sys) {
  const AssumptionReport report = check_assumptions(sys);
  if (!report.cond1_holds || !report.cond2_holds) {
    throw AssumptionViolated("reconfigure_psi: unknown-input rank conditions fail");
  }

  const Index n = sys.n();
  const Index m = sys.m();
  const Index q = sys.q();
  const Mat im = Mat::Identity(m, m);

  const Mat fp = pinv(sys.F);
  const Mat f_perp = im - sys.F * fp;
  const Mat c_bar = f_perp * sys.C;
  const Mat e_bar = sys.E * (Mat::Identity(q, q) - fp * sys.F);
  if (rank_of(e_bar).rank == 0) {
    throw ZeroUnknownInput("reconfigure_psi: residual unknown-input direction is zero; "
                           "no order reduction available");
  }
  const Mat a_bar = sys.A - sys.E * fp * sys.C;
  const Mat b_hat = sys.B - sys.E * fp * sys.D;

  PsiModel model;
  model.D = sys.D;
  model.C_bar = c_bar;
  model.Fperp = f_perp;
  model.E0 = full_column_factor(e_bar).first;
  const Index re = model.E0.cols();

  // State similarity [T0, E0] with inverse rows [T1; T2]: T1 annihilates E0.
  model.T0 = complete_basis(model.E0);
  Mat t_full(n, n);
  t_full.leftCols(n - re) = model.T0;
  t_full.rightCols(re) = model.E0;
  const Mat t_inv = t_full.partialPivLu().solve(Mat::Identity(n, n));
  model.T1 = t_inv.topRows(n - re);
  const Mat t2 = t_inv.bottomRows(re);

  // Output similarity [U0, C_bar E0]: requires rank(C_bar E0) == re.
  const Mat cbe0 = c_bar * model.E0;
  if (rank_of(cbe0).rank != re) {
    throw AssumptionViolated("reconfigure_psi: output does not expose the residual "
                             "unknown-input direction at full rank");
  }
  const Mat u0 = complete_basis(cbe0);
  Mat u_full(m, m);
  u_full.leftCols(m - re) = u0;
  u_full.rightCols(re) = cbe0;
  const Mat u_inv = u_full.partialPivLu().solve(Mat::Identity(m, m));
  model.U1_out = u_inv.topRows(m - re);
  model.U2 = u_inv.bottomRows(re);

  const Mat recover = (Mat::Identity(n, n) - model.E0 * model.U2 * c_bar) * model.T0;
  model.A_psi = model.T1 * a_bar * recover;
  model.H_hat = model.T1 * sys.E * fp + model.T1 * a_bar * model.E0 * model.U2 * f_perp;
  model.B_hat_bar = model.T1 * b_hat - model.T1 * a_bar * model.E0 * model.U2 * f_perp * sys.D;
  model.correction_state = recover;
  model.correction_y = model.E0 * model.U2 * f_perp;
  model.correction_u = -model.E0 * model.U2 * f_perp * sys.D;

  const double scale = 1.0 + t_full.norm() + u_full.norm();
  check_numeric((model.T1 * model.E0).norm() <= 1e-10 * scale * scale,
                "reduced state map does not annihilate the unknown-input direction");
  check_numeric((model.U1_out * cbe0).norm() <= 1e-10 * scale * scale,
                "output compression does not annihilate the unknown-input direction");
  check_numeric((model.U2 * cbe0 - Mat::Identity(re, re)).norm() <= 1e-8 * scale,
                "output similarity inverse is inconsistent");
  return model;
}

BreveModel reconfigure_breve(const LtiSystem& sys) {
  const Index n = sys.n();
  const Index m = sys.m();
  if (!sys.F.isZero(0)) {
    throw AssumptionViolated("reconfigure_breve: F must be zero for this specialization");
  }
  if (rank_of(sys.C).rank != m) {
    throw AssumptionViolated("reconfigure_breve: C must have full row rank "
                             "(row-compress the plant first)");
  }
  const AssumptionReport report = check_assumptions(sys);
  if (!report.cond1_holds || !report.cond2_holds) {
    throw AssumptionViolated("reconfigure_breve: unknown-input rank conditions fail");
  }

  const Mat ce_pinv = pinv(sys.C * sys.E);
  BreveModel model;
  model.D = sys.D;
  model.C = sys.C;
  model.G_breve = Mat::Identity(n, n) - sys.E * ce_pinv * sys.C;
  model.A_breve = model.G_breve * sys.A;
  model.H_breve = model.G_breve * sys.A * sys.E * ce_pinv;
  model.B_breve = model.G_breve * sys.B - model.H_breve * sys.D;
  model.C_hat_breve = Mat::Identity(m, m) - sys.C * sys.E * ce_pinv;
  model.correction_y = sys.E * ce_pinv;
  model.correction_u = -sys.E * ce_pinv * sys.D;

  const double scale = 1.0 + sys.A.norm() + sys.E.norm() + sys.C.norm();
  check_numeric((model.G_breve * sys.E).norm() <= 1e-10 * scale * scale,
                "breve model does not annihilate the unknown-input direction");
  return model;
}

RowCompressed row_compress_outputs(const LtiSystem& sys) {
  auto [c0, sel] = row_basis_selector(sys.C);
  LtiSystem compressed(sys.A, sys.B, sys.E, c0, sel * sys.D, sel * sys.F);
  return RowCompressed{std::move(compressed), std::move(sel)};
}

}  // namespace atobs
