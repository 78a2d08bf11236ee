#include <gtest/gtest.h>

#include <random>
#include <string>
#include <vector>

#include "sigma_forge/dualisation.hpp"

using namespace sigma_forge;

namespace {

struct Case {
  std::string algebra;
  std::string form;  // "killing" or "diag"
};

TraceForm pick_form(const NamedAlgebra& a, const std::string& form) {
  if (form == "killing") return trace_form(adjoint_rep(a.sc));
  return TraceForm::from_matrix(Eigen::Vector3d(1.0, 1.5, 2.0).asDiagonal().toDenseMatrix());
}

std::vector<Case> all_cases() {
  std::vector<Case> out;
  for (const char* n : {"su2", "so3", "sl2r"})
    for (const char* f : {"killing", "diag"}) out.push_back({n, f});
  return out;
}

// Solve T^T D_n = X_n with X_n(l, m) = C^k_{ln} T_{mk}; the intertwining relation read as a
// linear system for each n.
std::vector<Eigen::MatrixXd> dual_oracle(const StructureConstants& sc, const TraceForm& t) {
  const int n = sc.dim();
  std::vector<Eigen::MatrixXd> out;
  for (int j = 0; j < n; ++j) {
    Eigen::MatrixXd x(n, n);
    for (int l = 0; l < n; ++l)
      for (int m = 0; m < n; ++m) {
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += sc(k, l, j) * t(m, k);
        x(l, m) = s;
      }
    out.push_back(t.matrix().transpose().fullPivLu().solve(x));
  }
  return out;
}

StructureConstants jacobi_broken() {
  Tensor3 c(3);
  auto set = [&](int m, int n, int l, double v) {
    c(l, m, n) += v;
    c(l, n, m) -= v;
  };
  set(0, 1, 2, 1.0);
  set(0, 1, 0, 1.0);
  set(1, 2, 0, 1.0);
  set(2, 0, 1, 1.0);
  return StructureConstants::unchecked(c);
}

}  // namespace

TEST(DualConstants, IntertwiningAndClosure) {
  for (const Case& c : all_cases()) {
    const NamedAlgebra a = named_algebra(c.algebra);
    const DoubledAlgebra da = dual_constants(a.sc, pick_form(a, c.form));
    EXPECT_LT(verify_intertwining(da), 1e-12) << c.algebra << ' ' << c.form;
    EXPECT_LT(dual_closure_residual(da), 1e-12) << c.algebra << ' ' << c.form;
    const auto oracle = dual_oracle(a.sc, da.trace_form());
    for (int n = 0; n < 3; ++n)
      EXPECT_LT((da.d_matrix(n) - oracle[n]).cwiseAbs().maxCoeff(), 1e-13) << c.algebra << ' ' << c.form;
  }
}

TEST(DualConstants, Su2KillingGivesAdjoint) {
  const NamedAlgebra su2 = named_algebra("su2");
  for (const TraceForm& t : {trace_form(adjoint_rep(su2.sc)), trace_form(su2.rep)}) {
    const DoubledAlgebra da = dual_constants(su2.sc, t);
    for (int n = 0; n < 3; ++n) EXPECT_LT((da.d_matrix(n) - su2.sc.matrix(n)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(DualConstants, GenericBasis) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const char* name : {"su2", "sl2r", "heisenberg3"}) {
    Eigen::MatrixXd p(3, 3);
    for (int i = 0; i < 9; ++i) p(i / 3, i % 3) = u(rng);
    p += 2.0 * Eigen::MatrixXd::Identity(3, 3);
    const StructureConstants sc = change_of_basis(named_algebra(name).sc, p);
    Eigen::MatrixXd t(3, 3);
    for (int i = 0; i < 9; ++i) t(i / 3, i % 3) = u(rng);
    const TraceForm tf = TraceForm::from_matrix(t * t.transpose() + Eigen::MatrixXd::Identity(3, 3));
    const DoubledAlgebra da = dual_constants(sc, tf);
    EXPECT_LT(verify_intertwining(da), 1e-12) << name;
    EXPECT_LT(dual_closure_residual(da), 1e-12) << name;
    EXPECT_EQ(graded_jacobi_check(da).t_dual_dual, 0.0);
  }
}

TEST(DualConstants, ToleranceFailureThrows) {
  const NamedAlgebra su2 = named_algebra("su2");
  EXPECT_THROW(dual_constants(su2.sc, trace_form(su2.rep), 3, -1.0), IntertwiningFailure);
  EXPECT_THROW(dual_constants(su2.sc, TraceForm::from_matrix(Eigen::MatrixXd::Identity(2, 2))), AlgebraError);
}

TEST(GradedJacobi, ValidAlgebraPasses) {
  const NamedAlgebra sl2 = named_algebra("sl2r");
  const GradedJacobiReport r = graded_jacobi_check(dual_constants(sl2.sc, trace_form(sl2.rep)));
  EXPECT_EQ(r.ttt, 0.0);
  EXPECT_LT(r.tt_dual, 1e-12);
  EXPECT_LT(r.intertwining, 1e-12);
  EXPECT_LT(r.max(), 1e-12);
}

TEST(GradedJacobi, NegativeControls) {
  const NamedAlgebra su2 = named_algebra("su2");
  const TraceForm skewed = TraceForm::from_matrix(Eigen::Vector3d(1.0, 1.0, 2.0).asDiagonal().toDenseMatrix());

  // Adjoint matrices are a representation, so closure holds; intertwining with this T does not.
  std::vector<Eigen::MatrixXd> adj;
  for (int n = 0; n < 3; ++n) adj.push_back(su2.sc.matrix(n));
  const GradedJacobiReport wrong_t = graded_jacobi_check(DoubledAlgebra::unchecked(su2.sc, skewed, adj, 3));
  EXPECT_LT(wrong_t.tt_dual, 1e-15);
  EXPECT_GT(wrong_t.intertwining, 0.5);

  std::vector<Eigen::MatrixXd> doubled;
  for (int n = 0; n < 3; ++n) doubled.push_back(2.0 * su2.sc.matrix(n));
  const GradedJacobiReport wrong_d =
      graded_jacobi_check(DoubledAlgebra::unchecked(su2.sc, trace_form(su2.rep), doubled, 3));
  EXPECT_GT(wrong_d.tt_dual, 0.5);
}

TEST(JacobiCancellation, VanishesForLieAlgebras) {
  for (const char* name : {"su2", "sl2r", "heisenberg3", "abelian(3)"}) {
    const StructureConstants sc = named_algebra(name).sc;
    EXPECT_LT(jacobi_cancellation_check(sc, 17), 1e-13) << name;
    EXPECT_LT(jacobi_cancellation_check(sc, 18, SpacetimeGrid::cube(2, 12, 1.0)), 1e-13) << name;
    EXPECT_LT(jacobi_cancellation_check(sc, 19, SpacetimeGrid::cube(4, 4, 1.0)), 1e-13) << name;
  }
}

TEST(JacobiCancellation, BrokenAlgebraControl) {
  EXPECT_GT(jacobi_cancellation_check(jacobi_broken(), 17), 1e-2);
  EXPECT_GT(jacobi_cancellation_check(jacobi_broken(), 18, SpacetimeGrid::cube(2, 12, 1.0)), 1e-2);
}

TEST(SAction, SignTable) {
  for (int d = 2; d <= 6; ++d) {
    const SignedLabel s = s_action({GeneratorKind::original, 1}, d);
    EXPECT_EQ(s.label, (GeneratorLabel{GeneratorKind::dual, 1}));
    EXPECT_EQ(s.sign, 1);
    const SignedLabel back = s_action(s.label, d);
    EXPECT_EQ(back.label, (GeneratorLabel{GeneratorKind::original, 1}));
    EXPECT_EQ(back.sign, d % 2 == 0 ? 1 : -1);
    EXPECT_EQ(s_squared_sign(d), d % 2 == 0 ? 1 : -1);
  }
}

TEST(DoubledRep, RealizesTheDoubledAlgebra) {
  for (const Case& c : all_cases()) {
    const NamedAlgebra a = named_algebra(c.algebra);
    const DoubledAlgebra da = dual_constants(a.sc, pick_form(a, c.form), 2);
    const Representation rho = doubled_rep(da);
    EXPECT_EQ(rho.size(), 6);
    EXPECT_EQ(rho.n_rep(), 4);
    const DoubledRepResiduals r = doubled_rep_residuals(rho, da);
    EXPECT_LT(r.original, 1e-14);
    EXPECT_LT(r.mixed, 1e-14);
    EXPECT_EQ(r.dual, 0.0);
  }
}

TEST(DoubledAlgebra, Parity) {
  const NamedAlgebra su2 = named_algebra("su2");
  EXPECT_EQ(dual_constants(su2.sc, trace_form(su2.rep), 2).dual_parity(), 0);
  EXPECT_EQ(dual_constants(su2.sc, trace_form(su2.rep), 3).dual_parity(), 1);
  EXPECT_EQ(dual_constants(su2.sc, trace_form(su2.rep), 4).dual_parity(), 0);
}
