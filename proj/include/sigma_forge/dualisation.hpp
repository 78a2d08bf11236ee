#pragma once

// The doubled algebra {T_m, T~_i}: [T_m, T_n] = C^l_{mn} T_l, [T_m, T~_i] = D^l_{mi} T~_l and
// [T~_i, T~_j} = 0. The dual constants are fixed by the trace form through
//   D_n = -T^{-1} C_n^T T,   (C_n)^l_k = C^l_{nk},  (D_n)^l_k = D^l_{nk},
// which is equivalent to the intertwining relation T_{kl} D^k_{nm} = C^k_{ln} T_{mk}.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "sigma_forge/errors.hpp"
#include "sigma_forge/exterior.hpp"
#include "sigma_forge/lie_core.hpp"

namespace sigma_forge {

class DoubledAlgebra {
 public:
  /// No consistency checks; dual_constants() is the validated constructor.
  static DoubledAlgebra unchecked(StructureConstants sc, TraceForm t, std::vector<Eigen::MatrixXd> d_mats,
                                  int spacetime_dim) {
    if (static_cast<int>(d_mats.size()) != sc.dim() || t.dim() != sc.dim())
      throw AlgebraError("doubled algebra pieces have inconsistent dimensions");
    if (spacetime_dim < 2) throw AlgebraError("spacetime dimension must be at least 2");
    return DoubledAlgebra(std::move(sc), std::move(t), std::move(d_mats), spacetime_dim);
  }

  int dim() const { return sc_.dim(); }
  int spacetime_dim() const { return spacetime_dim_; }
  /// Parity of the dual generators: they couple to (D-2)-forms.
  int dual_parity() const { return (spacetime_dim_ - 2) % 2; }

  const StructureConstants& sc() const { return sc_; }
  const TraceForm& trace_form() const { return t_; }

  /// D^l_{nk}
  double d(int l, int n, int k) const { return d_mats_[n](l, k); }
  const Eigen::MatrixXd& d_matrix(int n) const { return d_mats_[n]; }
  const std::vector<Eigen::MatrixXd>& d_matrices() const { return d_mats_; }

  Tensor3 d_tensor() const {
    Tensor3 out(dim());
    for (int l = 0; l < dim(); ++l)
      for (int n = 0; n < dim(); ++n)
        for (int k = 0; k < dim(); ++k) out(l, n, k) = d(l, n, k);
    return out;
  }

 private:
  DoubledAlgebra(StructureConstants sc, TraceForm t, std::vector<Eigen::MatrixXd> d_mats, int spacetime_dim)
      : sc_(std::move(sc)), t_(std::move(t)), d_mats_(std::move(d_mats)), spacetime_dim_(spacetime_dim) {}

  StructureConstants sc_;
  TraceForm t_;
  std::vector<Eigen::MatrixXd> d_mats_;
  int spacetime_dim_;
};

/// max over (l, n, m) of |T_{kl} D^k_{nm} - C^k_{ln} T_{mk}|.
inline double verify_intertwining(const DoubledAlgebra& da) {
  const int n = da.dim();
  const TraceForm& t = da.trace_form();
  double worst = 0.0;
  for (int l = 0; l < n; ++l)
    for (int j = 0; j < n; ++j)
      for (int m = 0; m < n; ++m) {
        double s = 0.0;
        for (int k = 0; k < n; ++k) s += t(k, l) * da.d(k, j, m) - da.sc()(k, l, j) * t(m, k);
        worst = std::max(worst, std::abs(s));
      }
  return worst;
}

/// max-abs entry of [D_m, D_n] - C^l_{mn} D_l: the (T, T, T~) Jacobi identities.
inline double dual_closure_residual(const DoubledAlgebra& da) {
  const int n = da.dim();
  double worst = 0.0;
  for (int m = 0; m < n; ++m)
    for (int k = 0; k < n; ++k) {
      Eigen::MatrixXd diff = da.d_matrix(m) * da.d_matrix(k) - da.d_matrix(k) * da.d_matrix(m);
      for (int l = 0; l < n; ++l) diff -= da.sc()(l, m, k) * da.d_matrix(l);
      worst = std::max(worst, diff.cwiseAbs().maxCoeff());
    }
  return worst;
}

inline DoubledAlgebra dual_constants(const StructureConstants& sc, const TraceForm& t, int spacetime_dim = 3,
                                     double tolerance = kStructureTolerance) {
  if (t.dim() != sc.dim()) throw AlgebraError("trace form and algebra dimension differ");
  std::vector<Eigen::MatrixXd> d_mats;
  d_mats.reserve(sc.dim());
  for (int n = 0; n < sc.dim(); ++n) d_mats.push_back(-t.inverse() * sc.matrix(n).transpose() * t.matrix());
  DoubledAlgebra da = DoubledAlgebra::unchecked(sc, t, std::move(d_mats), spacetime_dim);
  const double r = verify_intertwining(da);
  if (!(r < tolerance)) throw IntertwiningFailure(r);
  return da;
}

struct GradedJacobiReport {
  double ttt = 0.0;              // Jacobi of the original algebra
  double tt_dual = 0.0;          // [D_m, D_n] = C^l_{mn} D_l
  double t_dual_dual = 0.0;      // every term contains [T~, T~] = 0
  double dual_dual_dual = 0.0;   // likewise
  double intertwining = 0.0;     // T_{kl} D^k_{nm} = C^k_{ln} T_{mk}

  double max() const { return std::max({ttt, tt_dual, t_dual_dual, dual_dual_dual}); }
};

/// Jacobi identities per generator class. The classes with two or three dual generators
/// vanish identically because the dual bracket is not represented at all.
inline GradedJacobiReport graded_jacobi_check(const DoubledAlgebra& da) {
  GradedJacobiReport r;
  r.ttt = structure_residuals(da.sc().tensor()).jacobi;
  r.tt_dual = dual_closure_residual(da);
  r.intertwining = verify_intertwining(da);
  return r;
}

namespace detail {

/// out l, left (u n_g + v), right k with coefficient given by `coeff(l, u, v, k)`.
template <class Fn>
Coupling pair_coupling(int n, Fn&& coeff) {
  Coupling c{n, {}};
  for (int l = 0; l < n; ++l)
    for (int u = 0; u < n; ++u)
      for (int v = 0; v < n; ++v)
        for (int k = 0; k < n; ++k) {
          const double x = coeff(l, u, v, k);
          if (x != 0.0) c.terms.push_back({l, u * n + v, k, x});
        }
  return c;
}

}  // namespace detail

/// Pointwise difference of the two cubic terms
///   1/2 C^k_{ln} C^n_{uv} F^u ^ F^v ^ A_k   and   C^k_{ln} C^t_{kv} F^n ^ F^v ^ A_t
/// on random smooth 1-forms F and (D-2)-forms A; zero to roundoff when Jacobi holds.
inline double jacobi_cancellation_check(const StructureConstants& sc, std::uint64_t seed, const SpacetimeGrid& grid,
                                        int n_modes = 3) {
  const int n = sc.dim();
  const int d = grid.dim();
  const FormField f = random_smooth_field(grid, 1, n, seed, n_modes);
  const FormField a = random_smooth_field(grid, d - 2, n, seed + 0x9e3779b97f4a7c15ULL, n_modes);
  const FormField ff = wedge(f, f, Coupling::outer(n, n));

  const Coupling first = detail::pair_coupling(n, [&](int l, int u, int v, int k) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += sc(k, l, j) * sc(j, u, v);
    return 0.5 * s;
  });
  // C^k_{ln} C^t_{kv} F^n ^ F^v ^ A_t with (n, v) the pair and t the right index.
  const Coupling second = detail::pair_coupling(n, [&](int l, int u, int v, int t) {
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += sc(k, l, u) * sc(t, k, v);
    return s;
  });
  const FormField lhs = wedge(ff, a, first);
  const FormField rhs = wedge(ff, a, second);
  return norm_linf(lhs - rhs);
}

inline double jacobi_cancellation_check(const StructureConstants& sc, std::uint64_t seed) {
  return jacobi_cancellation_check(sc, seed, SpacetimeGrid::cube(3, 8, 2.0 * std::numbers::pi));
}

enum class GeneratorKind { original, dual };

struct GeneratorLabel {
  GeneratorKind kind;
  int index;
  bool operator==(const GeneratorLabel&) const = default;
};

struct SignedLabel {
  GeneratorLabel label;
  int sign;
};

/// Pseudo-involution: T_i -> T~_i, T~_i -> (-1)^D T_i.
inline SignedLabel s_action(GeneratorLabel g, int spacetime_dim) {
  if (g.kind == GeneratorKind::original) return {{GeneratorKind::dual, g.index}, 1};
  return {{GeneratorKind::original, g.index}, (spacetime_dim % 2 == 0) ? 1 : -1};
}

/// Sign of S^2 on T_i.
inline int s_squared_sign(int spacetime_dim) {
  const SignedLabel once = s_action({GeneratorKind::original, 0}, spacetime_dim);
  const SignedLabel twice = s_action(once.label, spacetime_dim);
  return once.sign * twice.sign;
}

/// Nilpotent block representation on R^{n_g + 1}:
///   rho(T_m) = [[D_m, 0], [0, 0]],   rho(T~_i) = [[0, e_i], [0, 0]].
/// mats[0 .. n_g) are the rho(T_m), mats[n_g .. 2 n_g) the rho(T~_i).
inline Representation doubled_rep(const DoubledAlgebra& da) {
  const int n = da.dim();
  Representation rep;
  for (int m = 0; m < n; ++m) {
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n + 1, n + 1);
    r.topLeftCorner(n, n) = da.d_matrix(m);
    rep.mats.push_back(std::move(r));
  }
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n + 1, n + 1);
    r(i, n) = 1.0;
    rep.mats.push_back(std::move(r));
  }
  return rep;
}

struct DoubledRepResiduals {
  double original = 0.0;  // [rho(T_m), rho(T_n)] - C^l_{mn} rho(T_l)
  double mixed = 0.0;     // [rho(T_m), rho(T~_i)] - D^l_{mi} rho(T~_l)
  double dual = 0.0;      // rho(T~_i) rho(T~_j)
};

inline DoubledRepResiduals doubled_rep_residuals(const Representation& rep, const DoubledAlgebra& da) {
  const int n = da.dim();
  if (rep.size() != 2 * n) throw AlgebraError("doubled representation has wrong size");
  auto comm = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) -> Eigen::MatrixXd { return a * b - b * a; };
  DoubledRepResiduals r;
  for (int m = 0; m < n; ++m)
    for (int k = 0; k < n; ++k) {
      Eigen::MatrixXd x = comm(rep.mats[m], rep.mats[k]);
      for (int l = 0; l < n; ++l) x -= da.sc()(l, m, k) * rep.mats[l];
      r.original = std::max(r.original, x.cwiseAbs().maxCoeff());

      Eigen::MatrixXd y = comm(rep.mats[m], rep.mats[n + k]);
      for (int l = 0; l < n; ++l) y -= da.d(l, m, k) * rep.mats[n + l];
      r.mixed = std::max(r.mixed, y.cwiseAbs().maxCoeff());

      r.dual = std::max(r.dual, (rep.mats[n + m] * rep.mats[n + k]).cwiseAbs().maxCoeff());
    }
  return r;
}

}  // namespace sigma_forge
