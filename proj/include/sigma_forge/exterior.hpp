#pragma once

// Discrete exterior calculus on a periodic uniform grid over flat D-dimensional spacetime.
//
// A p-form is stored through its canonical components a_{mu_1 ... mu_p}, mu_1 < ... < mu_p,
// each multi-index encoded as a bitmask over the axes. Conventions:
//   a = sum_{I sorted} a_I dx^I,   (a ^ b)_K = sum_{I u J = K} sign(I, J) a_I b_J,
//   (da)_K = sum_j (-1)^j D_{K_j} a_{K \ K_j} with D the central difference,
//   (*a)_K = a^I eps_{I K}, I the complement of K, indices raised with diag(-1, +1, ..., +1)
//   in the lorentzian case and eps_{01...D-1} = +1.
// With these choices ** a = (-1)^{p(D-p)+s} a, s = 1 lorentzian, s = 0 euclidean.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sigma_forge/errors.hpp"

namespace sigma_forge {

inline constexpr int kMaxSpacetimeDim = 8;

enum class Signature { lorentzian, euclidean };

inline const char* to_string(Signature s) { return s == Signature::lorentzian ? "lorentzian" : "euclidean"; }

class SpacetimeGrid {
 public:
  SpacetimeGrid(std::vector<int> shape, std::vector<double> spacing, Signature signature = Signature::lorentzian)
      : shape_(std::move(shape)), spacing_(std::move(spacing)), signature_(signature) {
    const int d = static_cast<int>(shape_.size());
    if (d < 2 || d > kMaxSpacetimeDim) throw GridError("spacetime dimension must lie in [2, 8]");
    if (static_cast<int>(spacing_.size()) != d) throw GridError("one spacing per axis required");
    for (int mu = 0; mu < d; ++mu) {
      if (shape_[mu] < 4) throw GridError("every grid extent must be at least 4");
      if (!(spacing_[mu] > 0.0) || !std::isfinite(spacing_[mu])) throw GridError("grid spacings must be positive");
    }
    strides_.assign(d, 1);
    for (int mu = d - 2; mu >= 0; --mu) strides_[mu] = strides_[mu + 1] * static_cast<std::size_t>(shape_[mu + 1]);
    points_ = strides_[0] * static_cast<std::size_t>(shape_[0]);
  }

  /// n points per axis over a periodic box of side `length`.
  static SpacetimeGrid cube(int d, int n, double length, Signature signature = Signature::lorentzian) {
    if (d < 2) throw GridError("spacetime dimension must lie in [2, 8]");
    return SpacetimeGrid(std::vector<int>(d, n), std::vector<double>(d, length / n), signature);
  }

  int dim() const { return static_cast<int>(shape_.size()); }
  int extent(int mu) const { return shape_[mu]; }
  double spacing(int mu) const { return spacing_[mu]; }
  double length(int mu) const { return spacing_[mu] * shape_[mu]; }
  const std::vector<int>& shape() const { return shape_; }
  const std::vector<double>& spacings() const { return spacing_; }
  Signature signature() const { return signature_; }
  /// Number of negative metric eigenvalues.
  int s() const { return signature_ == Signature::lorentzian ? 1 : 0; }
  /// Diagonal of the (inverse) metric.
  double metric(int mu) const { return (signature_ == Signature::lorentzian && mu == 0) ? -1.0 : 1.0; }

  std::size_t points() const { return points_; }
  std::size_t stride(int mu) const { return strides_[mu]; }
  int coordinate(std::size_t pt, int mu) const { return static_cast<int>((pt / strides_[mu]) % shape_[mu]); }
  double position(std::size_t pt, int mu) const { return coordinate(pt, mu) * spacing_[mu]; }

  /// Periodic neighbour of `pt` one step forward (+1) or backward (-1) along `mu`.
  std::size_t neighbor(std::size_t pt, int mu, int step) const {
    const int c = coordinate(pt, mu);
    const int n = shape_[mu];
    const int target = (c + step % n + n) % n;
    return pt + (static_cast<std::ptrdiff_t>(target) - c) * static_cast<std::ptrdiff_t>(strides_[mu]);
  }

  double cell_volume() const {
    double v = 1.0;
    for (double h : spacing_) v *= h;
    return v;
  }

  double max_spacing() const { return *std::max_element(spacing_.begin(), spacing_.end()); }

  bool operator==(const SpacetimeGrid& o) const {
    return shape_ == o.shape_ && spacing_ == o.spacing_ && signature_ == o.signature_;
  }

 private:
  std::vector<int> shape_;
  std::vector<double> spacing_;
  Signature signature_;
  std::vector<std::size_t> strides_;
  std::size_t points_ = 0;
};

/// Canonical multi-indices of degree p in dimension D, in lexicographic order of sorted tuples.
struct FormBasis {
  int dim = 0;
  int degree = 0;
  std::vector<unsigned> masks;
  std::vector<int> index_of;  // mask -> position, -1 for masks of another degree

  int size() const { return static_cast<int>(masks.size()); }
  std::vector<int> indices(int multi) const {
    std::vector<int> out;
    for (int mu = 0; mu < dim; ++mu)
      if (masks[multi] & (1u << mu)) out.push_back(mu);
    return out;
  }
};

inline const FormBasis& form_basis(int d, int p) {
  static const auto table = [] {
    std::array<std::vector<FormBasis>, kMaxSpacetimeDim + 1> t;
    for (int dim = 0; dim <= kMaxSpacetimeDim; ++dim) {
      for (int deg = 0; deg <= dim; ++deg) {
        FormBasis b;
        b.dim = dim;
        b.degree = deg;
        b.index_of.assign(1u << dim, -1);
        // Collect then sort lexicographically by the sorted index tuple.
        for (unsigned m = 0; m < (1u << dim); ++m)
          if (std::popcount(m) == deg) b.masks.push_back(m);
        std::sort(b.masks.begin(), b.masks.end(), [dim](unsigned x, unsigned y) {
          for (int mu = 0; mu < dim; ++mu) {
            const bool bx = x & (1u << mu), by = y & (1u << mu);
            if (bx != by) return bx;
          }
          return false;
        });
        for (int i = 0; i < b.size(); ++i) b.index_of[b.masks[i]] = i;
        t[dim].push_back(std::move(b));
      }
    }
    return t;
  }();
  if (d < 0 || d > kMaxSpacetimeDim || p < 0 || p > d) throw DegreeOverflow("form degree out of range");
  return table[d][p];
}

/// Sign of the permutation sorting the concatenation (left..., right...) of two disjoint
/// sorted index sets.
inline int concat_sign(unsigned left, unsigned right) {
  int inversions = 0;
  for (unsigned r = right; r != 0; r &= r - 1) {
    const int j = std::countr_zero(r);
    inversions += std::popcount(left >> (j + 1));
  }
  return (inversions & 1) ? -1 : 1;
}

/// Grid-sampled p-form with n_comp algebra components.
/// Storage: values[(comp * n_multi + multi) * points + pt].
class FormField {
 public:
  FormField(SpacetimeGrid grid, int degree, int n_comp) : grid_(std::move(grid)), degree_(degree), n_comp_(n_comp) {
    if (degree < 0 || degree > grid_.dim()) throw DegreeOverflow("form degree exceeds spacetime dimension");
    if (n_comp <= 0) throw Error("form field needs at least one component");
    basis_ = &form_basis(grid_.dim(), degree);
    values_.assign(static_cast<std::size_t>(n_comp_) * basis_->size() * grid_.points(), 0.0);
  }

  const SpacetimeGrid& grid() const { return grid_; }
  int degree() const { return degree_; }
  int n_comp() const { return n_comp_; }
  int n_multi() const { return basis_->size(); }
  std::size_t points() const { return grid_.points(); }
  const FormBasis& basis() const { return *basis_; }

  std::span<double> slot(int comp, int multi) {
    return {values_.data() + offset(comp, multi), grid_.points()};
  }
  std::span<const double> slot(int comp, int multi) const {
    return {values_.data() + offset(comp, multi), grid_.points()};
  }
  double& at(int comp, int multi, std::size_t pt) { return values_[offset(comp, multi) + pt]; }
  double at(int comp, int multi, std::size_t pt) const { return values_[offset(comp, multi) + pt]; }

  /// Fully antisymmetric component a_{mu_1 ... mu_p} for an arbitrary index tuple.
  double component(int comp, std::span<const int> mu, std::size_t pt) const {
    if (static_cast<int>(mu.size()) != degree_) throw DegreeOverflow("index tuple length differs from degree");
    unsigned mask = 0;
    int inversions = 0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      if (mask & (1u << mu[i])) return 0.0;
      mask |= 1u << mu[i];
      for (std::size_t j = i + 1; j < mu.size(); ++j)
        if (mu[i] > mu[j]) ++inversions;
    }
    const double v = at(comp, basis_->index_of[mask], pt);
    return (inversions & 1) ? -v : v;
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool same_shape(const FormField& o) const {
    return degree_ == o.degree_ && n_comp_ == o.n_comp_ && grid_ == o.grid_;
  }

  FormField& operator+=(const FormField& o) {
    require_same(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }
  FormField& operator-=(const FormField& o) {
    require_same(o);
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
    return *this;
  }
  FormField& operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
  }

  friend FormField operator+(FormField a, const FormField& b) { return a += b; }
  friend FormField operator-(FormField a, const FormField& b) { return a -= b; }
  friend FormField operator*(double s, FormField a) { return a *= s; }
  friend FormField operator*(FormField a, double s) { return a *= s; }

 private:
  std::size_t offset(int comp, int multi) const {
    return (static_cast<std::size_t>(comp) * basis_->size() + multi) * grid_.points();
  }
  void require_same(const FormField& o) const {
    if (!same_shape(o)) throw Error("form fields differ in grid, degree or component count");
  }

  SpacetimeGrid grid_;
  int degree_;
  int n_comp_;
  const FormBasis* basis_ = nullptr;
  std::vector<double> values_;
};

/// How algebra indices of two wedge factors combine: out[term.out] += coeff * a[left] ^ b[right].
struct Coupling {
  struct Term {
    int out;
    int left;
    int right;
    double coeff;
  };

  int n_out = 1;
  std::vector<Term> terms;

  static Coupling scalar() { return {1, {{0, 0, 0, 1.0}}}; }

  /// out index = left * nb + right.
  static Coupling outer(int na, int nb) {
    Coupling c{na * nb, {}};
    for (int i = 0; i < na; ++i)
      for (int j = 0; j < nb; ++j) c.terms.push_back({i * nb + j, i, j, 1.0});
    return c;
  }

  /// Components are row-major n x n matrices; out = left * right (matrix product).
  static Coupling matrix_product(int n) {
    Coupling c{n * n, {}};
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j) c.terms.push_back({i * n + k, i * n + j, j * n + k, 1.0});
    return c;
  }
};

inline FormField wedge(const FormField& a, const FormField& b, const Coupling& coupling) {
  if (!(a.grid() == b.grid())) throw Error("wedge factors live on different grids");
  const int p = a.degree(), q = b.degree(), d = a.grid().dim();
  if (p + q > d) throw DegreeOverflow("wedge degree exceeds spacetime dimension");
  for (const auto& t : coupling.terms)
    if (t.left >= a.n_comp() || t.right >= b.n_comp() || t.out >= coupling.n_out || t.out < 0)
      throw Error("coupling index out of range");

  FormField out(a.grid(), p + q, coupling.n_out);
  const FormBasis& ba = a.basis();
  const FormBasis& bb = b.basis();
  const FormBasis& bo = out.basis();
  const std::size_t np = a.points();
  for (int i = 0; i < ba.size(); ++i) {
    for (int j = 0; j < bb.size(); ++j) {
      const unsigned mi = ba.masks[i], mj = bb.masks[j];
      if (mi & mj) continue;
      const int k = bo.index_of[mi | mj];
      const double sign = concat_sign(mi, mj);
      for (const auto& t : coupling.terms) {
        const double c = sign * t.coeff;
        auto x = a.slot(t.left, i);
        auto y = b.slot(t.right, j);
        auto z = out.slot(t.out, k);
        for (std::size_t pt = 0; pt < np; ++pt) z[pt] += c * x[pt] * y[pt];
      }
    }
  }
  return out;
}

/// Scalar-valued factors give a scalar product; otherwise the outer product of components.
inline FormField wedge(const FormField& a, const FormField& b) {
  if (a.n_comp() == 1 && b.n_comp() == 1) return wedge(a, b, Coupling::scalar());
  return wedge(a, b, Coupling::outer(a.n_comp(), b.n_comp()));
}

/// Pointwise linear map on the algebra index: out_r = sum_i m(r, i) a_i.
inline FormField mix(const FormField& a, const Eigen::MatrixXd& m) {
  if (m.cols() != a.n_comp()) throw Error("mixing matrix has wrong column count");
  FormField out(a.grid(), a.degree(), static_cast<int>(m.rows()));
  for (int r = 0; r < m.rows(); ++r)
    for (int i = 0; i < a.n_comp(); ++i) {
      const double c = m(r, i);
      if (c == 0.0) continue;
      for (int I = 0; I < a.n_multi(); ++I) {
        auto x = a.slot(i, I);
        auto z = out.slot(r, I);
        for (std::size_t pt = 0; pt < a.points(); ++pt) z[pt] += c * x[pt];
      }
    }
  return out;
}

/// Second-order central difference along `mu` with periodic wraparound.
inline void central_difference(const SpacetimeGrid& g, std::span<const double> f, int mu, std::span<double> out,
                               double scale = 1.0) {
  const double c = scale / (2.0 * g.spacing(mu));
  const std::size_t stride = g.stride(mu);
  const int n = g.extent(mu);
  const std::size_t block = stride * n;
  for (std::size_t base = 0; base < g.points(); base += block) {
    for (int i = 0; i < n; ++i) {
      const std::size_t fw = base + static_cast<std::size_t>((i + 1) % n) * stride;
      const std::size_t bw = base + static_cast<std::size_t>((i + n - 1) % n) * stride;
      const std::size_t here = base + static_cast<std::size_t>(i) * stride;
      for (std::size_t r = 0; r < stride; ++r) out[here + r] += c * (f[fw + r] - f[bw + r]);
    }
  }
}

inline FormField ext_d(const FormField& a) {
  const int p = a.degree(), d = a.grid().dim();
  if (p >= d) throw DegreeOverflow("exterior derivative of a top form");
  FormField out(a.grid(), p + 1, a.n_comp());
  const FormBasis& bi = a.basis();
  const FormBasis& bo = out.basis();
  for (int comp = 0; comp < a.n_comp(); ++comp) {
    for (int k = 0; k < bo.size(); ++k) {
      const unsigned mk = bo.masks[k];
      int position = 0;
      for (int mu = 0; mu < d; ++mu) {
        if (!(mk & (1u << mu))) continue;
        const int src = bi.index_of[mk & ~(1u << mu)];
        central_difference(a.grid(), a.slot(comp, src), mu, out.slot(comp, k), (position & 1) ? -1.0 : 1.0);
        ++position;
      }
    }
  }
  return out;
}

inline FormField hodge(const FormField& a) {
  const SpacetimeGrid& g = a.grid();
  const int d = g.dim();
  FormField out(g, d - a.degree(), a.n_comp());
  const FormBasis& bi = a.basis();
  const FormBasis& bo = out.basis();
  const unsigned all = (1u << d) - 1u;
  for (int i = 0; i < bi.size(); ++i) {
    const unsigned mi = bi.masks[i];
    const unsigned mk = all & ~mi;
    double sign = concat_sign(mi, mk);
    for (int mu = 0; mu < d; ++mu)
      if (mi & (1u << mu)) sign *= g.metric(mu);
    const int k = bo.index_of[mk];
    for (int comp = 0; comp < a.n_comp(); ++comp) {
      auto x = a.slot(comp, i);
      auto z = out.slot(comp, k);
      for (std::size_t pt = 0; pt < a.points(); ++pt) z[pt] = sign * x[pt];
    }
  }
  return out;
}

/// Expected eigenvalue of ** on p-forms.
inline double double_star_sign(int d, int p, int s) { return ((p * (d - p) + s) % 2 == 0) ? 1.0 : -1.0; }

inline double norm_linf(const FormField& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

inline double norm_l2(const FormField& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s * a.grid().cell_volume());
}

/// L-infinity norm restricted to points whose coordinate along `axis` is at least `margin`
/// away from both ends. Used on slabs that are not periodic along that axis.
inline double norm_linf_interior(const FormField& a, int axis, int margin) {
  const SpacetimeGrid& g = a.grid();
  double m = 0.0;
  for (int comp = 0; comp < a.n_comp(); ++comp)
    for (int I = 0; I < a.n_multi(); ++I) {
      auto x = a.slot(comp, I);
      for (std::size_t pt = 0; pt < a.points(); ++pt) {
        const int c = g.coordinate(pt, axis);
        if (c < margin || c >= g.extent(axis) - margin) continue;
        m = std::max(m, std::abs(x[pt]));
      }
    }
  return m;
}

/// Uniform double in [0, 1) from the top 53 bits; mt19937_64 output is fixed by the standard,
/// so fields are identical across standard libraries.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Trigonometric polynomial test field: every canonical component is
///   amplitude * sum_j w_j cos(2 pi k_j . x / L + theta_j),  sum_j w_j = 1, |k_j,mu| <= max_wavenumber.
inline FormField random_smooth_field(const SpacetimeGrid& grid, int degree, int n_comp, std::uint64_t seed,
                                     int n_modes, double amplitude = 1.0, int max_wavenumber = 2) {
  if (n_modes < 1) throw Error("random_smooth_field needs n_modes >= 1");
  FormField out(grid, degree, n_comp);
  std::mt19937_64 rng(seed);
  const int d = grid.dim();
  std::vector<std::vector<int>> k(n_modes, std::vector<int>(d));
  std::vector<double> w(n_modes), theta(n_modes);
  for (int comp = 0; comp < n_comp; ++comp) {
    for (int I = 0; I < out.n_multi(); ++I) {
      double total = 0.0;
      for (int j = 0; j < n_modes; ++j) {
        for (int mu = 0; mu < d; ++mu)
          k[j][mu] = static_cast<int>(rng() % static_cast<std::uint64_t>(2 * max_wavenumber + 1)) - max_wavenumber;
        w[j] = 0.05 + unit_uniform(rng);
        theta[j] = 2.0 * std::numbers::pi * unit_uniform(rng);
        total += w[j];
      }
      auto z = out.slot(comp, I);
      for (std::size_t pt = 0; pt < grid.points(); ++pt) {
        double v = 0.0;
        for (int j = 0; j < n_modes; ++j) {
          double phase = theta[j];
          for (int mu = 0; mu < d; ++mu)
            phase += 2.0 * std::numbers::pi * k[j][mu] * grid.coordinate(pt, mu) / grid.extent(mu);
          v += w[j] * std::cos(phase);
        }
        z[pt] = amplitude * v / total;
      }
    }
  }
  return out;
}

/// Structured-text export: header lines then one row per grid point (row-major point order),
/// each row listing every component in (comp, multi-index) order.
inline void write_form_field(std::ostream& os, const FormField& a) {
  const SpacetimeGrid& g = a.grid();
  os << "# sigma-forge form field v1\n";
  os << "dim " << g.dim() << "\nshape";
  for (int n : g.shape()) os << ' ' << n;
  os << "\nspacing" << std::setprecision(17);
  for (double h : g.spacings()) os << ' ' << h;
  os << "\nsignature " << to_string(g.signature()) << "\ndegree " << a.degree() << "\nn_comp " << a.n_comp()
     << "\nmulti_indices";
  for (int I = 0; I < a.n_multi(); ++I) {
    os << ' ';
    const auto idx = a.basis().indices(I);
    if (idx.empty()) os << '-';
    for (int mu : idx) os << mu;
  }
  os << '\n';
  for (std::size_t pt = 0; pt < a.points(); ++pt) {
    for (int comp = 0; comp < a.n_comp(); ++comp)
      for (int I = 0; I < a.n_multi(); ++I) os << (comp == 0 && I == 0 ? "" : " ") << a.at(comp, I, pt);
    os << '\n';
  }
}

}  // namespace sigma_forge
