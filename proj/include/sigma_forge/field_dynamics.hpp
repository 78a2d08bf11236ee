#pragma once

// Field-equation residuals of the first-order and doubled formulations, and a method-of-lines
// solver for the principal chiral model in 1+1 dimensions.
//
// All residuals are returned as forms so that callers can measure them with any norm. Every
// identity here is checked inside one fixed Hodge convention (see exterior.hpp).

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "sigma_forge/dualisation.hpp"
#include "sigma_forge/errors.hpp"
#include "sigma_forge/exterior.hpp"
#include "sigma_forge/lie_core.hpp"
#include "sigma_forge/parametrization.hpp"

namespace sigma_forge {

namespace detail {

inline double parity_sign(int d) { return (d % 2 == 0) ? 1.0 : -1.0; }

/// (D-2)-form with n_g components; shared by the multiplier and dual-potential fields.
inline void require_codimension_two(const FormField& f, const char* what) {
  if (f.degree() != f.grid().dim() - 2) throw DegreeOverflow(std::string(what) + " must be a (D-2)-form");
}

inline void require_field_strength(const FormField& f, int n_g) {
  if (f.degree() != 1) throw DegreeOverflow("field strength must be a 1-form");
  if (f.n_comp() != n_g) throw Error("field strength has wrong number of algebra components");
}

/// out l, left n, right m with coefficient K_{lnm}.
template <class Fn>
Coupling index_coupling(int n_out, int n_left, int n_right, Fn&& coeff) {
  Coupling c{n_out, {}};
  for (int l = 0; l < n_out; ++l)
    for (int a = 0; a < n_left; ++a)
      for (int b = 0; b < n_right; ++b) {
        const double x = coeff(l, a, b);
        if (x != 0.0) c.terms.push_back({l, a, b, x});
      }
  return c;
}

/// C^l_{mn} F^m ^ G^n
inline Coupling bracket_coupling(const StructureConstants& sc) {
  const int n = sc.dim();
  return index_coupling(n, n, n, [&](int l, int m, int k) { return sc(l, m, k); });
}

/// C^k_{ln} T_{mk} F^n ^ G^m
inline Coupling coadjoint_coupling(const StructureConstants& sc, const TraceForm& t) {
  const int n = sc.dim();
  return index_coupling(n, n, n, [&](int l, int a, int m) {
    double s = 0.0;
    for (int k = 0; k < n; ++k) s += sc(k, l, a) * t(m, k);
    return s;
  });
}

}  // namespace detail

/// Lagrange multipliers A_l, one (D-2)-form per generator.
class MultiplierField {
 public:
  explicit MultiplierField(FormField a) : a_(std::move(a)) { detail::require_codimension_two(a_, "multiplier"); }
  const FormField& form() const { return a_; }

 private:
  FormField a_;
};

/// Dual potentials phi~^l, one (D-2)-form per generator.
class DualPotentialField {
 public:
  explicit DualPotentialField(FormField p) : p_(std::move(p)) { detail::require_codimension_two(p_, "dual potential"); }
  const FormField& form() const { return p_; }

 private:
  FormField p_;
};

/// dF^l + 1/2 C^l_{mn} F^m ^ F^n
inline FormField bianchi_residual(const FormField& f, const StructureConstants& sc) {
  detail::require_field_strength(f, sc.dim());
  FormField r = ext_d(f);
  if (!sc.is_abelian()) r += 0.5 * wedge(f, f, detail::bracket_coupling(sc));
  return r;
}

/// d(T_{ml} *F^m) + C^k_{ln} T_{mk} F^n ^ *F^m
inline FormField second_order_residual(const FormField& f, const StructureConstants& sc, const TraceForm& t) {
  detail::require_field_strength(f, sc.dim());
  const FormField star_f = hodge(f);
  FormField r = ext_d(mix(star_f, t.matrix().transpose()));
  if (!sc.is_abelian()) r += wedge(f, star_f, detail::coadjoint_coupling(sc, t));
  return r;
}

/// (-1)^D T_{ml} *F^m + dA_l + C^k_{ln} F^n ^ A_k
inline FormField first_order_residual(const FormField& f, const MultiplierField& a, const StructureConstants& sc,
                                      const TraceForm& t) {
  detail::require_field_strength(f, sc.dim());
  const int d = f.grid().dim();
  FormField r = detail::parity_sign(d) * mix(hodge(f), t.matrix().transpose());
  r += ext_d(a.form());
  if (!sc.is_abelian()) {
    const int n = sc.dim();
    r += wedge(f, a.form(), detail::index_coupling(n, n, n, [&](int l, int k2, int k) { return sc(k, l, k2); }));
  }
  return r;
}

/// Doubled current G'' = F^m T_m + F~^i T~_i, stored by generator coefficients.
struct DoubledCurrent {
  FormField t_part;     // 1-form coefficients of T_m
  FormField dual_part;  // (D-1)-form coefficients of T~_i
};

/// On-shell doubled current: F~ = (-1)^D *F.
inline DoubledCurrent doubled_current(const FormField& f, int spacetime_dim) {
  if (f.degree() != 1) throw DegreeOverflow("field strength must be a 1-form");
  if (f.grid().dim() != spacetime_dim) throw GridError("spacetime dimension differs from the field's grid");
  return {f, detail::parity_sign(spacetime_dim) * hodge(f)};
}

/// Doubled current assembled from the potentials: F~^l = D^l_{mj} F^m ^ phi~^j + d phi~^l.
inline DoubledCurrent doubled_current_from_potentials(const FormField& f, const DualPotentialField& dual_pot,
                                                      const DoubledAlgebra& da) {
  detail::require_field_strength(f, da.dim());
  const int n = da.dim();
  FormField dual = ext_d(dual_pot.form());
  dual += wedge(f, dual_pot.form(), detail::index_coupling(n, n, n, [&](int l, int m, int j) { return da.d(l, m, j); }));
  return {f, std::move(dual)};
}

struct CartanMaurerResidual {
  FormField t_res;     // coefficient of T_l: the Bianchi residual of F
  FormField dual_res;  // coefficient of T~_l: dF~^l + D^l_{mi} F^m ^ F~^i
};

/// Generator coefficients of dG'' + G'' ^ G''. The F~ ^ F~ piece multiplies [T~, T~} and
/// therefore never contributes, in any dimension.
inline CartanMaurerResidual cartan_maurer_residual(const DoubledCurrent& dc, const DoubledAlgebra& da) {
  const int n = da.dim();
  FormField dual = ext_d(dc.dual_part);
  dual += wedge(dc.t_part, dc.dual_part,
                detail::index_coupling(n, n, n, [&](int l, int m, int i) { return da.d(l, m, i); }));
  return {bianchi_residual(dc.t_part, da.sc()), std::move(dual)};
}

/// max |(-1)^D T_{kl} dual_res^k - second_order_residual_l| for the on-shell doubled current.
inline double cartan_maurer_chain_mismatch(const FormField& f, const DoubledAlgebra& da) {
  const int d = f.grid().dim();
  const CartanMaurerResidual cm = cartan_maurer_residual(doubled_current(f, d), da);
  const FormField lhs = detail::parity_sign(d) * mix(cm.dual_res, da.trace_form().matrix().transpose());
  return norm_linf(lhs - second_order_residual(f, da.sc(), da.trace_form()));
}

/// (-1)^D *F^l - D^l_{mj} F^m ^ phi~^j - d phi~^l
inline FormField twisted_selfduality_residual(const FormField& f, const DualPotentialField& dual_pot,
                                              const DoubledAlgebra& da) {
  const DoubledCurrent from_potentials = doubled_current_from_potentials(f, dual_pot, da);
  return detail::parity_sign(f.grid().dim()) * hodge(f) - from_potentials.dual_part;
}

/// A_n = -T_{jn} phi~^j
inline MultiplierField map_dual_to_multiplier(const DualPotentialField& dual_pot, const TraceForm& t) {
  return MultiplierField(mix(dual_pot.form(), -t.matrix().transpose()));
}

/// Pointwise mismatch between the T-contracted twisted self-duality residual and the
/// first-order residual evaluated at the supplied multipliers.
inline double formulations_mismatch(const FormField& f, const DualPotentialField& dual_pot, const DoubledAlgebra& da,
                                    const MultiplierField& a) {
  const FormField contracted = mix(twisted_selfduality_residual(f, dual_pot, da), da.trace_form().matrix().transpose());
  return norm_linf(contracted - first_order_residual(f, a, da.sc(), da.trace_form()));
}

inline double formulations_equivalence_check(const FormField& f, const DualPotentialField& dual_pot,
                                             const DoubledAlgebra& da) {
  return formulations_mismatch(f, dual_pot, da, map_dual_to_multiplier(dual_pot, da.trace_form()));
}

/// Matrix-valued 1-form g'^{-1} dg' for g' = exp(phi^i rho(T_i)) exp(phi~^j rho(T~_j)) in the
/// doubled representation, by central differences. Requires D = 2 so that the dual
/// potentials are functions.
inline FormField doubled_current_via_rep(const ScalarField& phi, const DualPotentialField& dual_pot,
                                         const DoubledAlgebra& da) {
  const SpacetimeGrid& grid = phi.grid();
  if (grid.dim() != 2) throw GridError("the doubled group element is a matrix function only for D = 2");
  const Representation rho = doubled_rep(da);
  const int n = da.dim();
  Representation original{std::vector<Eigen::MatrixXd>(rho.mats.begin(), rho.mats.begin() + n)};
  Representation dual{std::vector<Eigen::MatrixXd>(rho.mats.begin() + n, rho.mats.end())};
  const int nr = n + 1;
  const std::size_t np = grid.points();
  std::vector<Eigen::MatrixXd> g(np), ginv(np);
  Eigen::VectorXd tilde(n);
  for (std::size_t pt = 0; pt < np; ++pt) {
    const Eigen::VectorXd v = phi.at(pt);
    for (int i = 0; i < n; ++i) tilde(i) = dual_pot.form().at(i, 0, pt);
    g[pt] = exp_map(v, original) * exp_map(tilde, dual);
    ginv[pt] = exp_map(Eigen::VectorXd(-tilde), dual) * exp_map(Eigen::VectorXd(-v), original);
  }
  FormField out(grid, 1, nr * nr);
  for (int mu = 0; mu < 2; ++mu) {
    const double c = 1.0 / (2.0 * grid.spacing(mu));
    for (std::size_t pt = 0; pt < np; ++pt) {
      const Eigen::MatrixXd j = ginv[pt] * (c * (g[grid.neighbor(pt, mu, 1)] - g[grid.neighbor(pt, mu, -1)]));
      for (int r = 0; r < nr; ++r)
        for (int s = 0; s < nr; ++s) out.at(r * nr + s, mu, pt) = j(r, s);
    }
  }
  return out;
}

/// A doubled current as a matrix-valued form in the doubled representation.
inline FormField doubled_current_matrix(const DoubledCurrent& dc, const DoubledAlgebra& da) {
  if (dc.t_part.degree() != dc.dual_part.degree())
    throw DegreeOverflow("original and dual parts only combine into one matrix form when degrees agree (D = 2)");
  const Representation rho = doubled_rep(da);
  const int n = da.dim();
  Representation original{std::vector<Eigen::MatrixXd>(rho.mats.begin(), rho.mats.begin() + n)};
  Representation dual{std::vector<Eigen::MatrixXd>(rho.mats.begin() + n, rho.mats.end())};
  return contract_with_rep(dc.t_part, original) + contract_with_rep(dc.dual_part, dual);
}

// ---------------------------------------------------------------------------------------
// 1+1 dimensional solver
// ---------------------------------------------------------------------------------------

/// Spatial profiles are n_g x n_x matrices; column i holds the algebra vector at x_i = i h.
struct SolverConfig {
  StructureConstants sc;
  TraceForm t;
  double length = 1.0;
  int n_x = 64;
  double dt = 1e-3;
  double t_end = 1.0;
  int sample_every = 1;
  Eigen::MatrixXd phi0;
  Eigen::MatrixXd phidot0;
  double cfl_limit = 0.5;
};

struct Trajectory {
  double length = 1.0;
  int n_x = 0;
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> phi;
  std::vector<Eigen::MatrixXd> phidot;
  std::vector<double> energy;
  std::vector<double> bianchi_monitor;
  std::vector<std::string> warnings;

  double h() const { return length / n_x; }
  std::size_t samples() const { return times.size(); }

  /// Space-time slab (t, x) built from `count` samples starting at `first`, taking every
  /// `stride`-th one. The time axis is axis 0; it is treated as periodic by the exterior
  /// operators, so residuals must be measured away from its ends.
  ScalarField slab(std::size_t first, std::size_t count, std::size_t stride = 1) const {
    if (count < 4 || first + (count - 1) * stride >= samples()) throw GridError("slab exceeds the trajectory");
    const double dt_sample = times[first + stride] - times[first];
    const int n_g = static_cast<int>(phi.front().rows());
    SpacetimeGrid grid({static_cast<int>(count), n_x}, {dt_sample, h()}, Signature::lorentzian);
    FormField values(grid, 0, n_g);
    for (std::size_t k = 0; k < count; ++k)
      for (int i = 0; i < n_x; ++i)
        for (int m = 0; m < n_g; ++m) values.at(m, 0, k * n_x + i) = phi[first + k * stride](m, i);
    return ScalarField(std::move(values));
  }
};

namespace detail {

/// F_t = W(phi) phi_dot and F_x = W(phi) D_x phi for one spatial profile.
struct Slice {
  Eigen::MatrixXd ft;
  Eigen::MatrixXd fx;
  std::vector<Eigen::MatrixXd> w;
  std::vector<Eigen::MatrixXd> m;
};

inline Eigen::MatrixXd dx_periodic(const Eigen::MatrixXd& u, double h) {
  const int n = static_cast<int>(u.cols());
  Eigen::MatrixXd out(u.rows(), n);
  for (int i = 0; i < n; ++i) out.col(i) = (u.col((i + 1) % n) - u.col((i + n - 1) % n)) / (2.0 * h);
  return out;
}

inline Slice make_slice(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& phidot, const StructureConstants& sc,
                        double h) {
  const int n_x = static_cast<int>(phi.cols());
  Slice s;
  s.ft.resize(phi.rows(), n_x);
  s.fx.resize(phi.rows(), n_x);
  s.w.resize(n_x);
  s.m.resize(n_x);
  const Eigen::MatrixXd grad = dx_periodic(phi, h);
  for (int i = 0; i < n_x; ++i) {
    s.m[i] = build_m(Eigen::VectorXd(phi.col(i)), sc);
    s.w[i] = w_matrix(s.m[i]);
    s.ft.col(i) = s.w[i] * phidot.col(i);
    s.fx.col(i) = s.w[i] * grad.col(i);
  }
  return s;
}

/// K_{lnm} = C^k_{ln} T_{mk}, flattened as K[(l n_g + n) n_g + m].
inline std::vector<double> coadjoint_tensor(const StructureConstants& sc, const TraceForm& t) {
  const int n = sc.dim();
  std::vector<double> k(static_cast<std::size_t>(n) * n * n, 0.0);
  for (int l = 0; l < n; ++l)
    for (int a = 0; a < n; ++a)
      for (int m = 0; m < n; ++m) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += sc(j, l, a) * t(m, j);
        k[(static_cast<std::size_t>(l) * n + a) * n + m] = s;
      }
  return k;
}

class PcmRhs {
 public:
  PcmRhs(const StructureConstants& sc, const TraceForm& t, double h)
      : sc_(sc), t_(t), h_(h), k_(coadjoint_tensor(sc, t)) {}

  /// Second time derivative of phi from the component form of the second-order equation:
  ///   T W phi_tt = T D_x F_x + K(F_x, F_x) - K(F_t, F_t) - T (dW[phi_t]) phi_t.
  Eigen::MatrixXd acceleration(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& phidot, double time) const {
    const int n = sc_.dim();
    const int n_x = static_cast<int>(phi.cols());
    const Slice s = make_slice(phi, phidot, sc_, h_);
    const Eigen::MatrixXd dfx = dx_periodic(s.fx, h_);
    Eigen::MatrixXd acc(n, n_x);
    Eigen::VectorXd rhs(n);
    for (int i = 0; i < n_x; ++i) {
      rhs = t_.matrix() * dfx.col(i);
      if (!sc_.is_abelian()) {
        for (int l = 0; l < n; ++l) {
          double q = 0.0;
          for (int a = 0; a < n; ++a)
            for (int m = 0; m < n; ++m)
              q += k_[(static_cast<std::size_t>(l) * n + a) * n + m] *
                   (s.fx(a, i) * s.fx(m, i) - s.ft(a, i) * s.ft(m, i));
          rhs(l) += q;
        }
        const Eigen::VectorXd v = phidot.col(i);
        rhs -= t_.matrix() * w_directional(s.m[i], build_m(v, sc_), v);
      }
      const Eigen::MatrixXd a = t_.matrix() * s.w[i];
      const Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
      if (!(lu.rcond() > 1e-12)) throw SingularEvolutionMatrix(time, static_cast<std::size_t>(i));
      acc.col(i) = lu.solve(rhs);
    }
    return acc;
  }

  double energy(const Slice& s) const {
    double e = 0.0;
    for (int i = 0; i < s.ft.cols(); ++i)
      e += 0.5 * (s.ft.col(i).dot(t_.matrix() * s.ft.col(i)) + s.fx.col(i).dot(t_.matrix() * s.fx.col(i)));
    return e * h_;
  }

  /// max |d_t F_x - D_x F_t + C^l_{mn} F^m_t F^n_x| with d_t F_x evaluated exactly from the state.
  double bianchi_monitor(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& phidot, const Slice& s) const {
    const int n = sc_.dim();
    const Eigen::MatrixXd grad = dx_periodic(phi, h_);
    const Eigen::MatrixXd grad_dot = dx_periodic(phidot, h_);
    const Eigen::MatrixXd dft = dx_periodic(s.ft, h_);
    double worst = 0.0;
    for (int i = 0; i < phi.cols(); ++i) {
      const Eigen::VectorXd v = phidot.col(i);
      Eigen::VectorXd r = w_directional(s.m[i], build_m(v, sc_), Eigen::VectorXd(grad.col(i))) +
                          s.w[i] * grad_dot.col(i) - dft.col(i);
      for (int l = 0; l < n; ++l)
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b) r(l) += sc_(l, a, b) * s.ft(a, i) * s.fx(b, i);
      worst = std::max(worst, r.cwiseAbs().maxCoeff());
    }
    return worst;
  }

  double h() const { return h_; }

 private:
  const StructureConstants& sc_;
  const TraceForm& t_;
  double h_;
  std::vector<double> k_;
};

}  // namespace detail

/// Classical RK4 integration of the principal chiral model on a periodic line. Records a
/// sample every `sample_every` steps plus the final state.
inline Trajectory evolve_pcm_1p1(const SolverConfig& cfg) {
  const int n = cfg.sc.dim();
  if (cfg.t.dim() != n) throw ConfigError("trace form and algebra dimension differ");
  if (cfg.n_x < 4) throw ConfigError("solver needs at least 4 spatial points");
  if (!(cfg.dt > 0.0) || !(cfg.t_end > 0.0) || !(cfg.length > 0.0)) throw ConfigError("dt, t_end, length must be positive");
  if (cfg.sample_every < 1) throw ConfigError("sample_every must be >= 1");
  if (cfg.phi0.rows() != n || cfg.phi0.cols() != cfg.n_x || cfg.phidot0.rows() != n || cfg.phidot0.cols() != cfg.n_x)
    throw ConfigError("initial data must be n_g x n_x");

  Trajectory traj;
  traj.length = cfg.length;
  traj.n_x = cfg.n_x;
  const double h = traj.h();
  if (cfg.dt > cfg.cfl_limit * h)
    traj.warnings.push_back("CFLViolation: dt = " + std::to_string(cfg.dt) + " exceeds " +
                            std::to_string(cfg.cfl_limit) + " h = " + std::to_string(cfg.cfl_limit * h));

  const detail::PcmRhs rhs(cfg.sc, cfg.t, h);
  const long steps = std::lround(cfg.t_end / cfg.dt);
  const double dt = cfg.dt;

  Eigen::MatrixXd phi = cfg.phi0;
  Eigen::MatrixXd vel = cfg.phidot0;
  auto record = [&](double time) {
    const detail::Slice s = detail::make_slice(phi, vel, cfg.sc, h);
    traj.times.push_back(time);
    traj.phi.push_back(phi);
    traj.phidot.push_back(vel);
    traj.energy.push_back(rhs.energy(s));
    traj.bianchi_monitor.push_back(rhs.bianchi_monitor(phi, vel, s));
  };
  record(0.0);
  for (long step = 0; step < steps; ++step) {
    const double time = step * dt;
    const Eigen::MatrixXd a1 = rhs.acceleration(phi, vel, time);
    const Eigen::MatrixXd p2 = phi + 0.5 * dt * vel, v2 = vel + 0.5 * dt * a1;
    const Eigen::MatrixXd a2 = rhs.acceleration(p2, v2, time + 0.5 * dt);
    const Eigen::MatrixXd p3 = phi + 0.5 * dt * v2, v3 = vel + 0.5 * dt * a2;
    const Eigen::MatrixXd a3 = rhs.acceleration(p3, v3, time + 0.5 * dt);
    const Eigen::MatrixXd p4 = phi + dt * v3, v4 = vel + dt * a3;
    const Eigen::MatrixXd a4 = rhs.acceleration(p4, v4, time + dt);
    phi += (dt / 6.0) * (vel + 2.0 * v2 + 2.0 * v3 + v4);
    vel += (dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
    if ((step + 1) % cfg.sample_every == 0 || step + 1 == steps) record((step + 1) * dt);
  }
  return traj;
}

/// Multiplier history for a 1+1 trajectory and its cross-consistency with the spatial
/// component of the first-order equation.
struct MultiplierHistory {
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> a;        // n_g x n_x per sample
  std::vector<double> consistency;       // per sample
  double max_consistency = 0.0;
};

/// Integrates the time component of the first-order equation (D = 2, A_l functions)
///   dA/dt = T F_x - K_t A,   (K_t)_{lk} = C^k_{ln} F^n_t,
/// at every spatial point and measures the spatial component
///   r = D_x A - (T F_t - K_x A),   (K_x)_{lk} = C^k_{ln} F^n_x.
/// Initial multipliers come from integrating the spatial component along x from A = 0 at
/// x_0 (trapezoidal rule). A periodic A exists only for vanishing net charge, so the two
/// points whose stencils straddle the x_0 seam are excluded from r. Time integration is RK4
/// over pairs of sample intervals; a trailing odd interval is dropped.
inline MultiplierHistory integrate_multipliers_1p1(const Trajectory& traj, const StructureConstants& sc,
                                                   const TraceForm& t) {
  const int n = sc.dim();
  const int n_x = traj.n_x;
  const double h = traj.h();
  if (traj.samples() < 3) throw Error("multiplier integration needs at least three samples");
  const std::size_t usable = traj.samples() - ((traj.samples() - 1) % 2);

  std::vector<detail::Slice> slices;
  slices.reserve(usable);
  for (std::size_t k = 0; k < usable; ++k) slices.push_back(detail::make_slice(traj.phi[k], traj.phidot[k], sc, h));

  auto contraction = [&](const Eigen::VectorXd& f) {
    Eigen::MatrixXd km = Eigen::MatrixXd::Zero(n, n);
    for (int l = 0; l < n; ++l)
      for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j) km(l, k) += sc(k, l, j) * f(j);
    return km;
  };

  MultiplierHistory hist;
  Eigen::MatrixXd a(n, n_x);
  {
    const detail::Slice& s = slices.front();
    a.col(0).setZero();
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i + 1 < n_x; ++i) {
      const Eigen::MatrixXd k0 = contraction(s.fx.col(i));
      const Eigen::MatrixXd k1 = contraction(s.fx.col(i + 1));
      const Eigen::VectorXd b0 = t.matrix() * s.ft.col(i), b1 = t.matrix() * s.ft.col(i + 1);
      const Eigen::VectorXd rhs = a.col(i) + 0.5 * h * (b0 - k0 * a.col(i) + b1);
      a.col(i + 1) = (eye + 0.5 * h * k1).partialPivLu().solve(rhs);
    }
  }

  auto consistency = [&](const detail::Slice& s, const Eigen::MatrixXd& am) {
    double worst = 0.0;
    for (int i = 1; i + 1 < n_x; ++i) {
      const Eigen::VectorXd dxa = (am.col(i + 1) - am.col(i - 1)) / (2.0 * h);
      const Eigen::VectorXd r = dxa - (t.matrix() * s.ft.col(i) - contraction(s.fx.col(i)) * am.col(i));
      worst = std::max(worst, r.cwiseAbs().maxCoeff());
    }
    return worst;
  };
  auto rate = [&](const detail::Slice& s, const Eigen::MatrixXd& am) {
    Eigen::MatrixXd out(n, n_x);
    for (int i = 0; i < n_x; ++i) out.col(i) = t.matrix() * s.fx.col(i) - contraction(s.ft.col(i)) * am.col(i);
    return out;
  };

  auto push = [&](std::size_t k) {
    hist.times.push_back(traj.times[k]);
    hist.a.push_back(a);
    hist.consistency.push_back(consistency(slices[k], a));
    hist.max_consistency = std::max(hist.max_consistency, hist.consistency.back());
  };
  push(0);
  for (std::size_t k = 0; k + 2 < usable; k += 2) {
    const double step = traj.times[k + 2] - traj.times[k];
    const Eigen::MatrixXd k1 = rate(slices[k], a);
    const Eigen::MatrixXd k2 = rate(slices[k + 1], a + 0.5 * step * k1);
    const Eigen::MatrixXd k3 = rate(slices[k + 1], a + 0.5 * step * k2);
    const Eigen::MatrixXd k4 = rate(slices[k + 2], a + step * k3);
    a += (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    push(k + 2);
  }
  return hist;
}

struct OnShellResiduals {
  double bianchi = 0.0;
  double second_order = 0.0;
};

/// Bianchi and second-order residuals on a (t, x) slab assembled from trajectory samples,
/// measured at least two samples away from the slab's time ends.
inline OnShellResiduals onshell_residuals(const Trajectory& traj, const StructureConstants& sc, const TraceForm& t,
                                          std::size_t stride = 1) {
  const std::size_t count = (traj.samples() - 1) / stride + 1;
  const ScalarField slab = traj.slab(0, count, stride);
  const FormField f = field_strengths(slab, sc);
  return {norm_linf_interior(bianchi_residual(f, sc), 0, 2), norm_linf_interior(second_order_residual(f, sc, t), 0, 2)};
}

}  // namespace sigma_forge
