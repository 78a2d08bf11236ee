#pragma once

// Exponential parametrization g = exp(phi^i T_i): the matrices M(phi) and W(phi), the field
// strengths F^m = W^m_n dphi^n, and the Noether current g^{-1} dg evaluated directly in a
// representation for cross-validation.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>

#include "sigma_forge/errors.hpp"
#include "sigma_forge/exterior.hpp"
#include "sigma_forge/lie_core.hpp"

namespace sigma_forge {

inline constexpr double kWSeriesCap = 30.0;
inline constexpr double kWSeriesRelTol = 1e-15;
inline constexpr double kScalarFieldCap = 10.0;

/// Induced infinity norm (max absolute row sum).
inline double inf_norm(const Eigen::MatrixXd& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().rowwise().sum().maxCoeff();
}

/// M^n_m = C^n_{lm} phi^l, i.e. the adjoint action of phi^l T_l.
inline Eigen::MatrixXd build_m(std::span<const double> phi, const StructureConstants& sc) {
  const int n = sc.dim();
  if (static_cast<int>(phi.size()) != n) throw Error("phi has wrong length for the algebra");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (int l = 0; l < n; ++l) {
    if (phi[l] == 0.0) continue;
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) m(r, c) += sc(r, l, c) * phi[l];
  }
  return m;
}

inline Eigen::MatrixXd build_m(const Eigen::VectorXd& phi, const StructureConstants& sc) {
  return build_m(std::span<const double>(phi.data(), static_cast<std::size_t>(phi.size())), sc);
}

/// W = sum_k (-1)^k M^k / (k+1)!, the entire-function form of (I - e^{-M}) M^{-1}; defined
/// for singular M as well. Stops once the next term is below 1e-15 (1 + |partial sum|).
inline Eigen::MatrixXd w_matrix(const Eigen::MatrixXd& m, double cap = kWSeriesCap) {
  const double norm = inf_norm(m);
  if (!(norm <= cap)) throw SeriesDivergence(norm, cap);
  const Eigen::Index n = m.rows();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
  for (int k = 1; k < 1000; ++k) {
    term = (term * m) * (-1.0 / (k + 1));
    if (inf_norm(term) < kWSeriesRelTol * (1.0 + inf_norm(sum))) break;
    sum += term;
  }
  return sum;
}

/// Directional derivative of the W series applied to a vector:
///   (dW/dphi [v]) w = sum_{k>=1} (-1)^k / (k+1)! sum_{j<k} M^j M_v M^{k-1-j} w,
/// with M = M(phi) and M_v = M(v). Needed for the time derivative of F_t = W(phi) phi_dot.
inline Eigen::VectorXd w_directional(const Eigen::MatrixXd& m, const Eigen::MatrixXd& m_dir, const Eigen::VectorXd& w,
                                     double cap = kWSeriesCap) {
  const double norm = inf_norm(m);
  if (!(norm <= cap)) throw SeriesDivergence(norm, cap);
  const double scale = inf_norm(m_dir) * (w.size() ? w.cwiseAbs().maxCoeff() : 0.0);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(w.size());
  Eigen::VectorXd power = w;          // M^{k-1} w
  Eigen::VectorXd inner = m_dir * w;  // S_k w with S_1 = M_v
  double coeff = -0.5;                // (-1)^k / (k+1)!
  double norm_power = 1.0;            // |M|^{k-1}
  for (int k = 1; k < 1000; ++k) {
    // |S_k w| <= k |M|^{k-1} |M_v| |w|
    const double bound = std::abs(coeff) * k * norm_power * scale;
    if (bound < kWSeriesRelTol * (1.0 + sum.cwiseAbs().maxCoeff())) break;
    sum += coeff * inner;
    power = m * power;                  // M^k w
    inner = m * inner + m_dir * power;  // S_{k+1} w = M S_k w + M_v M^k w
    coeff *= -1.0 / (k + 2);
    norm_power *= norm;
  }
  return sum;
}

/// Scalar configuration phi^i(x): a degree-0 form with n_g components, finite and bounded
/// by `cap` in max-norm so that the W series stays well conditioned.
class ScalarField {
 public:
  explicit ScalarField(FormField values, double cap = kScalarFieldCap) : values_(std::move(values)) {
    if (values_.degree() != 0) throw Error("scalar field must be a 0-form");
    for (double v : values_.values()) {
      if (!std::isfinite(v)) throw NumericalError("scalar field contains non-finite values");
      if (std::abs(v) > cap) throw NumericalError("scalar field exceeds amplitude cap");
    }
  }

  const FormField& form() const { return values_; }
  const SpacetimeGrid& grid() const { return values_.grid(); }
  int n_g() const { return values_.n_comp(); }

  Eigen::VectorXd at(std::size_t pt) const {
    Eigen::VectorXd v(n_g());
    for (int i = 0; i < n_g(); ++i) v(i) = values_.at(i, 0, pt);
    return v;
  }

 private:
  FormField values_;
};

/// F^m = W^m_n(phi) dphi^n with dphi from the central-difference exterior derivative.
inline FormField field_strengths(const ScalarField& phi, const StructureConstants& sc) {
  const int n = sc.dim();
  if (phi.n_g() != n) throw Error("scalar field and algebra dimension differ");
  const FormField dphi = ext_d(phi.form());
  FormField f(phi.grid(), 1, n);
  const int d = phi.grid().dim();
  Eigen::VectorXd grad(n);
  for (std::size_t pt = 0; pt < phi.grid().points(); ++pt) {
    const Eigen::MatrixXd w = w_matrix(build_m(phi.at(pt), sc));
    for (int mu = 0; mu < d; ++mu) {
      for (int i = 0; i < n; ++i) grad(i) = dphi.at(i, mu, pt);
      const Eigen::VectorXd fm = w * grad;
      for (int i = 0; i < n; ++i) f.at(i, mu, pt) = fm(i);
    }
  }
  return f;
}

/// exp(phi^i R_i) via scaling and squaring.
inline Eigen::MatrixXd exp_map(std::span<const double> phi, const Representation& rep) {
  if (static_cast<int>(phi.size()) != rep.size()) throw Error("phi has wrong length for the representation");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rep.n_rep(), rep.n_rep());
  for (int i = 0; i < rep.size(); ++i) a += phi[i] * rep.mats[i];
  return a.exp();
}

inline Eigen::MatrixXd exp_map(const Eigen::VectorXd& phi, const Representation& rep) {
  return exp_map(std::span<const double>(phi.data(), static_cast<std::size_t>(phi.size())), rep);
}

/// Matrix-valued 1-form g^{-1} dg with g = exp(phi^i R_i) pointwise and dg by central
/// differences of g. Components are the N x N entries, row-major.
inline FormField noether_current_direct(const ScalarField& phi, const Representation& rep) {
  const SpacetimeGrid& grid = phi.grid();
  const int nr = rep.n_rep();
  const std::size_t np = grid.points();
  std::vector<Eigen::MatrixXd> g(np), ginv(np);
  for (std::size_t pt = 0; pt < np; ++pt) {
    const Eigen::VectorXd v = phi.at(pt);
    g[pt] = exp_map(v, rep);
    ginv[pt] = exp_map(Eigen::VectorXd(-v), rep);
  }
  FormField out(grid, 1, nr * nr);
  for (int mu = 0; mu < grid.dim(); ++mu) {
    const double c = 1.0 / (2.0 * grid.spacing(mu));
    for (std::size_t pt = 0; pt < np; ++pt) {
      const Eigen::MatrixXd dg = c * (g[grid.neighbor(pt, mu, 1)] - g[grid.neighbor(pt, mu, -1)]);
      const Eigen::MatrixXd j = ginv[pt] * dg;
      for (int r = 0; r < nr; ++r)
        for (int s = 0; s < nr; ++s) out.at(r * nr + s, mu, pt) = j(r, s);
    }
  }
  return out;
}

/// sum_m f^m R_m as a matrix-valued form (row-major N x N components).
inline FormField contract_with_rep(const FormField& f, const Representation& rep) {
  if (f.n_comp() != rep.size()) throw Error("form components do not match representation size");
  const int nr = rep.n_rep();
  Eigen::MatrixXd m(nr * nr, rep.size());
  for (int i = 0; i < rep.size(); ++i)
    for (int r = 0; r < nr; ++r)
      for (int s = 0; s < nr; ++s) m(r * nr + s, i) = rep.mats[i](r, s);
  return mix(f, m);
}

}  // namespace sigma_forge
