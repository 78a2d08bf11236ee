// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "sigma_forge/cli.hpp"

using namespace sigma_forge;
namespace cli = sigma_forge::cli;

namespace {

constexpr double kPi = std::numbers::pi;
const std::filesystem::path kConfigDir = SIGMA_FORGE_CONFIG_DIR;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

struct Line {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void criterion(int id, const char* title, const std::function<void(Line&)>& body) {
  Line line;
  try {
    body(line);
  } catch (const std::exception& e) {
    line.pass = false;
    line.detail << " [exception: " << e.what() << "]";
  }
  if (!line.pass) ++failures;
  std::printf("%s %2d %s:%s\n", line.pass ? "PASS" : "FAIL", id, title, line.detail.str().c_str());
  std::fflush(stdout);
}

TraceForm killing(const StructureConstants& sc) { return trace_form(adjoint_rep(sc)); }

TraceForm diag_form() { return TraceForm::from_matrix(Eigen::Vector3d(1.0, 1.5, 2.0).asDiagonal().toDenseMatrix()); }

Eigen::MatrixXd w_eigen_oracle(const Eigen::MatrixXd& m) {
  const Eigen::EigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::MatrixXcd v = es.eigenvectors();
  Eigen::VectorXcd f(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const std::complex<double> z = es.eigenvalues()(i);
    f(i) = std::abs(z) < 1e-8 ? 1.0 - z / 2.0 + z * z / 6.0 : (1.0 - std::exp(-z)) / z;
  }
  return (v * f.asDiagonal() * v.inverse()).real();
}

ScalarField smooth_scalar(const SpacetimeGrid& g, int n_g, double amplitude) {
  FormField f(g, 0, n_g);
  for (std::size_t pt = 0; pt < g.points(); ++pt) {
    const double t = 2 * kPi * g.position(pt, 0) / g.length(0);
    const double x = 2 * kPi * g.position(pt, 1) / g.length(1);
    for (int i = 0; i < n_g; ++i) f.at(i, 0, pt) = amplitude * (std::sin(x + t + 0.9 * i) + 0.375 * std::cos(t - 0.5 * i));
  }
  return ScalarField(std::move(f));
}

std::vector<double> pairwise_orders(const std::vector<double>& err) {
  std::vector<double> p;
  for (std::size_t i = 1; i < err.size(); ++i) p.push_back(std::log2(err[i - 1] / err[i]));
  return p;
}

bool all_within(const std::vector<double>& v, double lo, double hi) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x >= lo && x <= hi; });
}

std::string list(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(3);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

const cli::json& check_of(const cli::json& report, const std::string& name) {
  for (const cli::json& c : report["checks"])
    if (c["name"] == name) return c;
  throw std::runtime_error("report lacks check " + name);
}

cli::RunOptions options() {
  cli::RunOptions o;
  o.base_dir = kConfigDir;
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

int main() {
  criterion(1, "algebra validation", [](Line& l) {
    const auto start = Clock::now();
    double worst = 0.0;
    for (const char* name : {"abelian(3)", "heisenberg3", "su2", "sl2r", "so3"}) {
      const StructureResiduals r = structure_residuals(named_algebra(name).sc.tensor());
      worst = std::max({worst, r.antisymmetry, r.jacobi});
    }
    const cli::Outcome o = cli::run_config(cli::Scenario::validate, cli::json{{"algebra", "su2"}}, options());
    const double elapsed = seconds_since(start);
    l.detail << " max residual " << worst << ", cli exit " << o.exit_code << ", " << elapsed << " s";
    l.require(worst == 0.0, "residuals exactly 0");
    l.require(o.exit_code == 0, "validate su2 passes");
    l.require(elapsed < 1.0, "runtime < 1 s");
  });

  criterion(2, "W-matrix", [](Line& l) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-2.5, 2.5);
    double oracle = 0.0;
    for (const char* name : {"su2", "sl2r"}) {
      const StructureConstants sc = named_algebra(name).sc;
      for (int checked = 0; checked < 100;) {
        const Eigen::Vector3d phi(u(rng), u(rng), u(rng));
        const Eigen::MatrixXd m = build_m(phi, sc);
        if (inf_norm(m) > 5.0) continue;
        oracle = std::max(oracle, (w_matrix(m) - w_eigen_oracle(m)).cwiseAbs().maxCoeff());
        ++checked;
      }
    }
    const StructureConstants heis = named_algebra("heisenberg3").sc;
    double affine = 0.0, kernel = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Eigen::Vector3d phi(u(rng), u(rng), u(rng));
      const Eigen::MatrixXd m = build_m(phi, heis);
      affine = std::max(affine, (w_matrix(m) - (Eigen::MatrixXd::Identity(3, 3) - 0.5 * m)).cwiseAbs().maxCoeff());
      for (const char* name : {"su2", "sl2r", "so3", "heisenberg3"}) {
        const Eigen::Vector3d p = 0.6 * phi;
        kernel = std::max(kernel, (w_matrix(build_m(p, named_algebra(name).sc)) * p - p).cwiseAbs().maxCoeff());
      }
    }
    l.detail << " oracle " << oracle << ", heisenberg " << affine << ", kernel " << kernel;
    l.require(oracle < 1e-11, "eigen oracle < 1e-11");
    l.require(affine <= 1e-15, "heisenberg closed form 1e-15");
    l.require(kernel < 1e-12, "kernel fixed point < 1e-12");
  });

  criterion(3, "Noether current cross-check", [](Line& l) {
    const auto start = Clock::now();
    bool ok = true;
    for (const char* name : {"su2", "sl2r"}) {
      const NamedAlgebra a = named_algebra(name);
      std::vector<double> err;
      for (int n : {32, 64, 128}) {
        const ScalarField phi = smooth_scalar(SpacetimeGrid::cube(2, n, 2.0), 3, 0.8);
        err.push_back(norm_linf(noether_current_direct(phi, a.rep) - contract_with_rep(field_strengths(phi, a.sc), a.rep)));
      }
      const auto p = pairwise_orders(err);
      l.detail << ' ' << name << " orders " << list(p);
      ok = ok && all_within(p, 1.8, 2.2);
    }
    const double elapsed = seconds_since(start);
    l.detail << ", " << elapsed << " s";
    l.require(ok, "orders in [1.8, 2.2]");
    l.require(elapsed < 30.0, "runtime < 30 s");
  });

  criterion(4, "exterior engine", [](Line& l) {
    double star = 0.0, dd = 0.0;
    for (int d : {2, 3, 4})
      for (Signature sig : {Signature::lorentzian, Signature::euclidean}) {
        const SpacetimeGrid g(std::vector<int>(d, d == 4 ? 6 : 10), std::vector<double>(d, 0.1), sig);
        const int s = sig == Signature::lorentzian ? 1 : 0;
        for (int p = 0; p <= d; ++p) {
          const FormField a = random_smooth_field(g, p, 2, 100 * d + p, 3);
          const double sign = (p * (d - p) + s) % 2 == 0 ? 1.0 : -1.0;
          star = std::max(star, norm_linf(hodge(hodge(a)) - sign * a));
          if (p + 2 <= d) dd = std::max(dd, norm_linf(ext_d(ext_d(a))));
        }
      }
    l.detail << " **-sign " << star << ", dd " << dd;
    l.require(star < 1e-12, "** sign < 1e-12");
    l.require(dd <= 1e-13, "dd <= 1e-13");
  });

  criterion(5, "dualisation", [](Line& l) {
    double inter = 0.0, closure = 0.0;
    for (const char* name : {"su2", "so3", "sl2r"}) {
      const StructureConstants sc = named_algebra(name).sc;
      for (const TraceForm& t : {killing(sc), diag_form()}) {
        const DoubledAlgebra da = dual_constants(sc, t, 3, std::numeric_limits<double>::infinity());
        inter = std::max(inter, verify_intertwining(da));
        closure = std::max(closure, dual_closure_residual(da));
      }
    }
    const StructureConstants su2 = named_algebra("su2").sc;
    const DoubledAlgebra k = dual_constants(su2, killing(su2));
    double special = 0.0;
    for (int n = 0; n < 3; ++n) special = std::max(special, (k.d_matrix(n) - su2.matrix(n)).cwiseAbs().maxCoeff());
    l.detail << " intertwining " << inter << ", closure " << closure << ", su2 D-C " << special;
    l.require(inter < 1e-12, "intertwining < 1e-12");
    l.require(closure < 1e-12, "closure < 1e-12");
    l.require(special < 1e-14, "su2 Killing D = C");
  });

  criterion(6, "F^F^A Jacobi cancellation", [](Line& l) {
    const auto start = Clock::now();
    double worst = 0.0;
    for (const char* name : {"su2", "sl2r", "heisenberg3"}) {
      const StructureConstants sc = named_algebra(name).sc;
      worst = std::max(worst, jacobi_cancellation_check(sc, 5, SpacetimeGrid::cube(3, 16, 1.0)));
      worst = std::max(worst, jacobi_cancellation_check(sc, 6, SpacetimeGrid::cube(2, 24, 1.0)));
    }
    Tensor3 c(3);
    auto set = [&](int m, int n, int k, double v) {
      c(k, m, n) += v;
      c(k, n, m) -= v;
    };
    set(0, 1, 2, 1.0);
    set(0, 1, 0, 1.0);
    set(1, 2, 0, 1.0);
    set(2, 0, 1, 1.0);
    const double control = jacobi_cancellation_check(StructureConstants::unchecked(c), 5, SpacetimeGrid::cube(3, 16, 1.0));
    const double elapsed = seconds_since(start);
    l.detail << " residual " << worst << ", broken control " << control << ", " << elapsed << " s";
    l.require(worst < 1e-13, "< 1e-13");
    l.require(control > 1e-1, "control O(1)");
    l.require(elapsed < 60.0, "runtime < 60 s");
  });

  criterion(7, "doubled Cartan-Maurer vs second-order equation", [](Line& l) {
    const StructureConstants su2 = named_algebra("su2").sc;
    double worst = 0.0;
    for (int d : {2, 3}) {
      const SpacetimeGrid g = SpacetimeGrid::cube(d, d == 2 ? 24 : 12, 1.0);
      const FormField f = field_strengths(ScalarField(random_smooth_field(g, 0, 3, 30 + d, 3, 0.5)), su2);
      worst = std::max(worst, cartan_maurer_chain_mismatch(f, dual_constants(su2, killing(su2), d)));
    }
    l.detail << " mismatch " << worst;
    l.require(worst < 1e-12, "< 1e-12");
  });

  criterion(8, "twisted self-duality vs multiplier equations", [](Line& l) {
    double worst = 0.0, control = std::numeric_limits<double>::infinity();
    for (const char* name : {"su2", "sl2r", "heisenberg3"})
      for (int d : {2, 3, 4}) {
        const StructureConstants sc = named_algebra(name).sc;
        const TraceForm t = std::string(name) == "heisenberg3" ? diag_form() : killing(sc);
        const DoubledAlgebra da = dual_constants(sc, t, d);
        const SpacetimeGrid g = SpacetimeGrid::cube(d, d == 4 ? 5 : 10, 1.0);
        const FormField f = random_smooth_field(g, 1, 3, 40 + d, 3);
        const DualPotentialField p(random_smooth_field(g, d - 2, 3, 50 + d, 3));
        worst = std::max(worst, formulations_equivalence_check(f, p, da));
        control = std::min(control, formulations_mismatch(f, p, da, MultiplierField(mix(p.form(), t.matrix().transpose()))));
      }
    l.detail << " mismatch " << worst << ", wrong-sign control min " << control;
    l.require(worst < 1e-12, "< 1e-12");
    l.require(control > 1e-1, "control O(1)");
  });

  criterion(9, "abelian solver convergence", [](Line& l) {
    const auto start = Clock::now();
    const StructureConstants sc = named_algebra("abelian(3)").sc;
    const TraceForm t = TraceForm::from_matrix(Eigen::MatrixXd::Identity(3, 3));
    std::vector<double> err;
    for (int n : {16, 32, 64, 128}) {
      SolverConfig cfg{sc, t, 1.0, n, 0.25 / n, 1.0, 1, Eigen::MatrixXd(3, n), Eigen::MatrixXd(3, n)};
      auto exact = [&](int m, double time, double x) { return 0.3 * std::sin(2 * kPi * (x - time) + m); };
      for (int i = 0; i < n; ++i)
        for (int m = 0; m < 3; ++m) {
          cfg.phi0(m, i) = exact(m, 0.0, double(i) / n);
          cfg.phidot0(m, i) = -0.6 * kPi * std::cos(2 * kPi * i / double(n) + m);
        }
      const Trajectory tr = evolve_pcm_1p1(cfg);
      double s = 0.0;
      for (int i = 0; i < n; ++i)
        for (int m = 0; m < 3; ++m) s += std::pow(tr.phi.back()(m, i) - exact(m, tr.times.back(), double(i) / n), 2);
      err.push_back(std::sqrt(s / n));
    }
    const auto p = pairwise_orders(err);
    const double elapsed = seconds_since(start);
    l.detail << " L2 orders " << list(p) << ", " << elapsed << " s";
    l.require(all_within(p, 1.8, 2.2), "orders in [1.8, 2.2]");
    l.require(elapsed < 60.0, "runtime < 60 s");
  });

  // shared by 10 and 11
  const cli::Outcome conv = cli::run_config(cli::Scenario::convergence,
                                            cli::detail::read_json_file(kConfigDir / "convergence_su2.json"), options());

  criterion(10, "su(2) Killing solver", [&](Line& l) {
    const StructureConstants su2 = named_algebra("su2").sc;
    const TraceForm t = killing(su2);
    const Eigen::Vector3d v(0.6, -0.3, 0.9);
    double err = 0.0, drift = 0.0;
    for (int n : {32, 64}) {
      SolverConfig cfg{su2, t, 1.0, n, 1e-3, 1.0, 100, Eigen::MatrixXd::Zero(3, n), v.replicate(1, n)};
      const Trajectory tr = evolve_pcm_1p1(cfg);
      err = std::max(err, (tr.phi.back() - v.replicate(1, n)).cwiseAbs().maxCoeff());
    }
    // drift on non-trivial data: traveling wave, same time step
    const int n = 64;
    SolverConfig wave{su2, t, 1.0, n, 1e-3, 1.0, 100, Eigen::MatrixXd(3, n), Eigen::MatrixXd(3, n)};
    for (int i = 0; i < n; ++i)
      for (int m = 0; m < 3; ++m) {
        wave.phi0(m, i) = 0.3 * std::sin(2 * kPi * i / n + m);
        wave.phidot0(m, i) = -0.6 * kPi * std::cos(2 * kPi * i / n + m);
      }
    const Trajectory tr = evolve_pcm_1p1(wave);
    const double e0 = tr.energy.front();
    for (double e : tr.energy) drift = std::max(drift, std::abs(e - e0) / std::abs(e0));
    const double pb = check_of(conv.report, "onshell_bianchi_order")["value"].get<double>();
    const double ps = check_of(conv.report, "onshell_second_order_order")["value"].get<double>();
    const auto& d = conv.report["data"];
    l.detail << " homogeneous error " << err << ", energy drift " << drift << ", on-shell orders bianchi "
             << list(d["onshell_bianchi_order"]["pairwise_orders"].get<std::vector<double>>()) << " second-order "
             << list(d["onshell_second_order_order"]["pairwise_orders"].get<std::vector<double>>());
    l.require(err < 1e-6, "homogeneous error < 1e-6");
    l.require(drift < 1e-8, "energy drift < 1e-8");
    l.require(pb > 1.8 && ps > 1.8, "on-shell residuals O(h^2)");
    l.require(all_within(d["onshell_bianchi_order"]["pairwise_orders"].get<std::vector<double>>(), 1.8, 2.2) &&
                  all_within(d["onshell_second_order_order"]["pairwise_orders"].get<std::vector<double>>(), 1.8, 2.2),
              "pairwise orders in [1.8, 2.2]");
  });

  criterion(11, "multiplier integrability", [&](Line& l) {
    const auto& d = conv.report["data"]["multiplier_consistency_order"];
    const std::vector<double> p = d["pairwise_orders"].get<std::vector<double>>();
    const cli::Outcome sim = cli::run_config(
        cli::Scenario::simulate, cli::detail::read_json_file(kConfigDir / "simulate_su2_wave.json"), options());
    const double on = check_of(sim.report, "multiplier_consistency")["value"].get<double>();
    const double off = check_of(sim.report, "multiplier_offshell_control")["value"].get<double>();
    l.detail << " on-shell orders " << list(p) << ", on-shell residual " << on << ", off-shell control " << off;
    l.require(all_within(p, 1.8, 2.2), "second-order convergence");
    l.require(off > 1e-1, "off-shell control O(1)");
    l.require(off > 100.0 * on, "control separates from on-shell");
  });

  criterion(12, "determinism", [](Line& l) {
#ifdef SIGMA_FORGE_CLI
    const std::filesystem::path dir = std::filesystem::temp_directory_path() / "sigma_forge_acceptance";
    std::filesystem::create_directories(dir);
    bool same = true;
    for (const char* name : {"identities_su2_d3", "simulate_su2_wave", "dualize_su2"}) {
      const std::string scenario = std::string(name).substr(0, std::string(name).find('_'));
      std::string bytes[2];
      for (int k = 0; k < 2; ++k) {
        const std::filesystem::path out = dir / (std::string(name) + std::to_string(k) + ".json");
        std::filesystem::remove(out);
        const std::string cmd = std::string("\"") + SIGMA_FORGE_CLI + "\" " + scenario + " --config \"" +
                                (kConfigDir / (std::string(name) + ".json")).string() + "\" --report \"" +
                                out.string() + "\"";
        const int rc = std::system(cmd.c_str());
        l.require(rc != -1 && WEXITSTATUS(rc) == 0, std::string(name) + " exit 0");
        bytes[k] = slurp(out);
      }
      same = same && !bytes[0].empty() && bytes[0] == bytes[1];
      l.detail << ' ' << name << ' ' << bytes[0].size() << " bytes";
    }
    std::filesystem::remove_all(dir);
    l.require(same, "byte-identical reports");
#else
    l.require(false, "CLI path not configured");
#endif
  });

  std::printf("%s: %d criteria failed\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
