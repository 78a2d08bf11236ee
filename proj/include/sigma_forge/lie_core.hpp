#pragma once

// Lie algebra data: structure constants C^l_{mn} with [T_m, T_n] = C^l_{mn} T_l,
// real matrix representations and the trace form T_{mn} = tr(R_m R_n).

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sigma_forge/errors.hpp"

namespace sigma_forge {

inline constexpr double kStructureTolerance = 1e-12;
inline constexpr double kTraceFormMaxCondition = 1e12;

/// Dense cube of reals indexed (l, m, n), row-major with n fastest.
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(int n) : n_(n), v_(static_cast<std::size_t>(n) * n * n, 0.0) {
    if (n <= 0) throw AlgebraError("tensor dimension must be positive");
  }

  int dim() const { return n_; }
  double& operator()(int l, int m, int n) { return v_[index(l, m, n)]; }
  double operator()(int l, int m, int n) const { return v_[index(l, m, n)]; }
  const std::vector<double>& values() const { return v_; }

 private:
  std::size_t index(int l, int m, int n) const {
    return (static_cast<std::size_t>(l) * n_ + m) * n_ + n;
  }

  int n_ = 0;
  std::vector<double> v_;
};

struct StructureResiduals {
  double antisymmetry = 0.0;
  double jacobi = 0.0;
  std::array<int, 3> worst_antisymmetry{0, 0, 0};
  std::array<int, 4> worst_jacobi{0, 0, 0, 0};
};

/// Max |C^l_{mn} + C^l_{nm}| and the max Jacobi component
///   C^k_{ln} C^n_{uv} + C^n_{vl} C^k_{un} + C^n_{lu} C^k_{vn}   (summed over n)
/// over all free indices (k, l, u, v).
inline StructureResiduals structure_residuals(const Tensor3& c) {
  const int n = c.dim();
  StructureResiduals r;
  for (int l = 0; l < n; ++l)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        const double v = std::abs(c(l, a, b) + c(l, b, a));
        if (v > r.antisymmetry) {
          r.antisymmetry = v;
          r.worst_antisymmetry = {l, a, b};
        }
      }
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l)
      for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v) {
          double s = 0.0;
          for (int j = 0; j < n; ++j)
            s += c(k, l, j) * c(j, u, v) + c(j, v, l) * c(k, u, j) + c(j, l, u) * c(k, v, j);
          if (std::abs(s) > r.jacobi) {
            r.jacobi = std::abs(s);
            r.worst_jacobi = {k, l, u, v};
          }
        }
  return r;
}

/// Validated structure constants. Construct through validate_structure(); unchecked()
/// exists for negative controls that need deliberately broken algebras.
class StructureConstants {
 public:
  static StructureConstants unchecked(Tensor3 c) { return StructureConstants(std::move(c)); }

  int dim() const { return c_.dim(); }
  /// C^l_{mn}
  double operator()(int l, int m, int n) const { return c_(l, m, n); }
  const Tensor3& tensor() const { return c_; }

  /// Adjoint matrix (C_n)^l_k = C^l_{nk}.
  Eigen::MatrixXd matrix(int n) const {
    const int d = dim();
    Eigen::MatrixXd out(d, d);
    for (int l = 0; l < d; ++l)
      for (int k = 0; k < d; ++k) out(l, k) = c_(l, n, k);
    return out;
  }

  bool is_abelian() const {
    for (double v : c_.values())
      if (v != 0.0) return false;
    return true;
  }

 private:
  explicit StructureConstants(Tensor3 c) : c_(std::move(c)) {}
  Tensor3 c_;
};

inline StructureConstants validate_structure(Tensor3 c, double tolerance = kStructureTolerance) {
  const StructureResiduals r = structure_residuals(c);
  if (r.antisymmetry >= tolerance) throw AntisymmetryViolation(r.antisymmetry, r.worst_antisymmetry);
  if (r.jacobi >= tolerance) throw JacobiViolation(r.jacobi, r.worst_jacobi);
  return StructureConstants::unchecked(std::move(c));
}

/// n_g real N x N matrices R_m.
struct Representation {
  std::vector<Eigen::MatrixXd> mats;

  int size() const { return static_cast<int>(mats.size()); }
  int n_rep() const { return mats.empty() ? 0 : static_cast<int>(mats.front().rows()); }
};

/// Max-abs entry of R_m R_n - R_n R_m - C^l_{mn} R_l over all (m, n).
inline double homomorphism_residual(const Representation& rep, const StructureConstants& sc) {
  const int n = sc.dim();
  if (rep.size() != n) throw AlgebraError("representation has wrong number of matrices");
  double worst = 0.0;
  for (int m = 0; m < n; ++m)
    for (int k = 0; k < n; ++k) {
      Eigen::MatrixXd diff = rep.mats[m] * rep.mats[k] - rep.mats[k] * rep.mats[m];
      for (int l = 0; l < n; ++l) diff -= sc(l, m, k) * rep.mats[l];
      worst = std::max(worst, diff.cwiseAbs().maxCoeff());
    }
  return worst;
}

inline Representation adjoint_rep(const StructureConstants& sc) {
  Representation rep;
  rep.mats.reserve(sc.dim());
  for (int n = 0; n < sc.dim(); ++n) rep.mats.push_back(sc.matrix(n));
  return rep;
}

/// Symmetric invertible bilinear form T_{mn} with cached inverse.
class TraceForm {
 public:
  /// Symmetrizes `t`; throws DegenerateTraceForm when cond(t) >= max_condition.
  static TraceForm from_matrix(const Eigen::MatrixXd& t, double max_condition = kTraceFormMaxCondition) {
    if (t.rows() != t.cols() || t.rows() == 0) throw AlgebraError("trace form must be a non-empty square matrix");
    Eigen::MatrixXd sym = 0.5 * (t + t.transpose());
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(sym);
    const auto& s = svd.singularValues();
    const double smax = s(0);
    const double smin = s(s.size() - 1);
    const double cond = (smin > 0.0) ? smax / smin : std::numeric_limits<double>::infinity();
    if (!(cond < max_condition)) throw DegenerateTraceForm(cond);
    return TraceForm(std::move(sym), cond);
  }

  int dim() const { return static_cast<int>(t_.rows()); }
  double operator()(int m, int n) const { return t_(m, n); }
  const Eigen::MatrixXd& matrix() const { return t_; }
  const Eigen::MatrixXd& inverse() const { return t_inv_; }
  double condition() const { return condition_; }

 private:
  TraceForm(Eigen::MatrixXd t, double cond) : t_(std::move(t)), condition_(cond) {
    t_inv_ = t_.partialPivLu().inverse();
  }

  Eigen::MatrixXd t_;
  Eigen::MatrixXd t_inv_;
  double condition_ = 1.0;
};

inline TraceForm trace_form(const Representation& rep) {
  const int n = rep.size();
  if (n == 0) throw AlgebraError("empty representation");
  Eigen::MatrixXd t(n, n);
  for (int m = 0; m < n; ++m)
    for (int k = 0; k < n; ++k) t(m, k) = (rep.mats[m] * rep.mats[k]).trace();
  return TraceForm::from_matrix(t);
}

/// max over (l, m, n) of |T_{km} C^k_{ln} + T_{nk} C^k_{lm}|; zero for ad-invariant forms.
inline double check_ad_invariance(const TraceForm& t, const StructureConstants& sc) {
  const int n = sc.dim();
  double worst = 0.0;
  for (int l = 0; l < n; ++l)
    for (int m = 0; m < n; ++m)
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += t(k, m) * sc(k, l, j) + t(j, k) * sc(k, l, m);
        worst = std::max(worst, std::abs(s));
      }
  return worst;
}

struct NamedAlgebra {
  StructureConstants sc;
  Representation rep;
};

namespace detail {

inline Eigen::MatrixXd unit_matrix(int n, int r, int c) {
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n, n);
  e(r, c) = 1.0;
  return e;
}

inline void set_bracket(Tensor3& c, int m, int n, int l, double v) {
  c(l, m, n) = v;
  c(l, n, m) = -v;
}

inline int levi_civita3(int a, int b, int c) {
  if (a == b || b == c || a == c) return 0;
  return ((a + 1) % 3 == b) ? 1 : -1;
}

}  // namespace detail

/// Test-corpus algebras: "abelian(n)", "heisenberg3", "su2", "sl2r", "so3".
///
/// Default representations: abelian(n) uses the diagonal unit matrices E_mm; heisenberg3
/// the strictly upper-triangular 3x3 matrices; su2 the realified spin-1/2 matrices
/// -i sigma_m / 2 (4x4 real); sl2r the defining 2x2 matrices of (H, E, F); so3 the
/// defining rotation generators (L_i)_{jk} = -eps_{ijk}.
inline NamedAlgebra named_algebra(std::string_view name) {
  using detail::set_bracket;
  using detail::unit_matrix;
  const std::string s(name);

  if (s.rfind("abelian(", 0) == 0 && s.back() == ')') {
    const std::string digits = s.substr(8, s.size() - 9);
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) throw UnknownAlgebra(s);
    const int n = std::stoi(digits);
    if (n <= 0 || n > 64) throw UnknownAlgebra(s);
    Representation rep;
    for (int m = 0; m < n; ++m) rep.mats.push_back(unit_matrix(n, m, m));
    return {validate_structure(Tensor3(n)), std::move(rep)};
  }
  if (s == "heisenberg3") {
    Tensor3 c(3);
    set_bracket(c, 0, 1, 2, 1.0);
    Representation rep{{unit_matrix(3, 0, 1), unit_matrix(3, 1, 2), unit_matrix(3, 0, 2)}};
    return {validate_structure(std::move(c)), std::move(rep)};
  }
  if (s == "su2" || s == "so3") {
    Tensor3 c(3);
    for (int l = 0; l < 3; ++l)
      for (int m = 0; m < 3; ++m)
        for (int n = 0; n < 3; ++n) c(l, m, n) = detail::levi_civita3(m, n, l);
    Representation rep;
    if (s == "so3") {
      for (int i = 0; i < 3; ++i) {
        Eigen::MatrixXd li = Eigen::MatrixXd::Zero(3, 3);
        for (int j = 0; j < 3; ++j)
          for (int k = 0; k < 3; ++k) li(j, k) = -detail::levi_civita3(i, j, k);
        rep.mats.push_back(li);
      }
    } else {
      // -i sigma/2 realified: a complex 2x2 matrix A + iB becomes [[A, -B], [B, A]].
      const Eigen::Matrix2d zero = Eigen::Matrix2d::Zero();
      const std::array<std::pair<Eigen::Matrix2d, Eigen::Matrix2d>, 3> parts = {{
          {zero, (Eigen::Matrix2d() << 0, -0.5, -0.5, 0).finished()},  // -i sigma_x / 2
          {(Eigen::Matrix2d() << 0, -0.5, 0.5, 0).finished(), zero},   // -i sigma_y / 2
          {zero, (Eigen::Matrix2d() << -0.5, 0, 0, 0.5).finished()},   // -i sigma_z / 2
      }};
      for (const auto& [re, im] : parts) {
        Eigen::MatrixXd r(4, 4);
        r << re, -im, im, re;
        rep.mats.push_back(r);
      }
    }
    return {validate_structure(std::move(c)), std::move(rep)};
  }
  if (s == "sl2r") {
    // basis (H, E, F)
    Tensor3 c(3);
    set_bracket(c, 0, 1, 1, 2.0);
    set_bracket(c, 0, 2, 2, -2.0);
    set_bracket(c, 1, 2, 0, 1.0);
    Eigen::MatrixXd h(2, 2), e(2, 2), f(2, 2);
    h << 1, 0, 0, -1;
    e << 0, 1, 0, 0;
    f << 0, 0, 1, 0;
    return {validate_structure(std::move(c)), Representation{{h, e, f}}};
  }
  throw UnknownAlgebra(s);
}

/// Structure constants in the basis T'_m = P^a_m T_a:
///   C'^l_{mn} = P^a_m P^b_n C^c_{ab} (P^{-1})^l_c.
/// Used to manufacture Jacobi-valid algebras with generic real constants.
inline StructureConstants change_of_basis(const StructureConstants& sc, const Eigen::MatrixXd& p,
                                          double tolerance = 1e-10) {
  const int n = sc.dim();
  if (p.rows() != n || p.cols() != n) throw AlgebraError("basis change has wrong shape");
  const Eigen::MatrixXd pinv = p.inverse();
  Tensor3 out(n);
  for (int l = 0; l < n; ++l)
    for (int m = 0; m < n; ++m)
      for (int k = 0; k < n; ++k) {
        double s = 0.0;
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b) {
            const double pab = p(a, m) * p(b, k);
            if (pab == 0.0) continue;
            for (int c = 0; c < n; ++c) s += pab * sc(c, a, b) * pinv(l, c);
          }
        out(l, m, k) = s;
      }
  return validate_structure(std::move(out), tolerance);
}

/// Representation matrices transformed along with change_of_basis: R'_m = P^a_m R_a.
inline Representation change_of_basis(const Representation& rep, const Eigen::MatrixXd& p) {
  Representation out;
  const int n = rep.size();
  for (int m = 0; m < n; ++m) {
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(rep.n_rep(), rep.n_rep());
    for (int a = 0; a < n; ++a) r += p(a, m) * rep.mats[a];
    out.mats.push_back(std::move(r));
  }
  return out;
}

}  // namespace sigma_forge
