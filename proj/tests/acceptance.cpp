// Acceptance criteria: one PASS/FAIL line each. `--only N` runs a single one.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "poisson_kam/dynamics.hpp"
#include "poisson_kam/homological.hpp"
#include "poisson_kam/io.hpp"
#include "poisson_kam_cli/cli.hpp"
#include "support.hpp"

using namespace poisson_kam;
using namespace test_support;
namespace fs = std::filesystem;

namespace {

const fs::path kProblems = POISSON_KAM_PROBLEMS_DIR;

struct Verdict {
  bool pass = true;
  std::string detail;
};

// Records the first failure; later checks only add to the count.
class Tally {
 public:
  void check(bool ok, const std::string& what) {
    ++checks_;
    if (ok) return;
    ++failures_;
    if (first_.empty()) first_ = what;
  }
  Verdict verdict(const std::string& summary) const {
    if (failures_ == 0) return {true, fmt::format("{} ({} checks)", summary, checks_)};
    return {false, fmt::format("{}; {}/{} checks failed, first: {}", summary, failures_, checks_, first_)};
  }

 private:
  long checks_ = 0, failures_ = 0;
  std::string first_;
};

double rel(const Series& a, const Series& b) { return relative_difference(a, b); }

Verdict algebra_suite() {
  std::mt19937_64 rng(1);
  Tally t;
  int series = 0;
  const WeightedNormParams wp{0.8, 0.6};
  for (int trial = 0; trial < 400; ++trial) {
    const int n = 1 + trial % 3;
    const int m = 1 + (trial / 3) % 3;
    const Truncation tr{4 + trial % 5, 2 + trial % 3, 2 + (trial / 5) % 3};
    const auto sp = SeriesSpace::make(n, m, 0.5, tr);
    // Factors small enough that no product of three leaves the truncation.
    const Shape sh{4, tr.k_max / 3, tr.l_max / 3, 0, tr.p_max / 3, 0, true, 1.0};
    const Series f = random_series(sp, rng, sh);
    const Series g = random_series(sp, rng, sh);
    const Series h = random_series(sp, rng, sh);
    series += 3;
    const std::string at = fmt::format("trial {}", trial);

    t.check(add(f, g) == add(g, f), at + ": f+g");
    t.check(mul(f, g) == mul(g, f), at + ": fg");
    t.check(add(f, Series(sp)) == f, at + ": f+0");
    t.check(mul(f, Series::constant(sp, 1.0)) == f, at + ": 1f");
    t.check(add(f, neg(f)).empty(), at + ": f-f");
    t.check(rel(add(add(f, g), h), add(f, add(g, h))) <= 1e-12, at + ": (f+g)+h");
    t.check(rel(mul(mul(f, g), h), mul(f, mul(g, h))) <= 1e-12, at + ": (fg)h");
    t.check(rel(mul(f, add(g, h)), add(mul(f, g), mul(f, h))) <= 1e-12, at + ": f(g+h)");
    const Series fg = mul(f, g);
    t.check(fg.truncation_loss() == 0.0, at + ": no discard");

    for (int l = 0; l < n; ++l) {
      t.check(rel(partial_x(fg, l), add(mul(partial_x(f, l), g), mul(f, partial_x(g, l)))) <= 1e-12,
              at + ": ∂x Leibniz");
      t.check(is_real_symmetric(partial_x(f, l)), at + ": ∂x reality");
    }
    for (int i = 0; i < m; ++i) {
      t.check(rel(partial_y(fg, i), add(mul(partial_y(f, i), g), mul(f, partial_y(g, i)))) <= 1e-12,
              at + ": ∂y Leibniz");
      t.check(is_real_symmetric(partial_y(f, i)), at + ": ∂y reality");
    }
    t.check(rel(partial_xi(fg), add(mul(partial_xi(f), g), mul(f, partial_xi(g)))) <= 1e-12, at + ": ∂ξ Leibniz");

    t.check(is_real_symmetric(f), at + ": f reality");
    t.check(is_real_symmetric(add(f, g)), at + ": f+g reality");
    t.check(is_real_symmetric(fg), at + ": fg reality");
    t.check(is_real_symmetric(partial_xi(f)), at + ": ∂ξ reality");

    const double nf = weighted_norm(f, wp).K, ng = weighted_norm(g, wp).K;
    t.check(weighted_norm(fg, wp).K <= nf * ng * (1.0 + 1e-12), at + ": ‖fg‖ ≤ ‖f‖‖g‖");
    t.check(weighted_norm(add(f, g), wp).K <= (nf + ng) * (1.0 + 1e-12), at + ": ‖f+g‖ ≤ ‖f‖+‖g‖");
  }
  return t.verdict(fmt::format("{} random series", series));
}

Verdict bracket_suite() {
  std::mt19937_64 rng(2);
  Tally t;
  const Shape sh{4, 2, 1, 0, 1, 0, true, 1.0};
  auto jacobi_ok = [](const Series& F, const Series& G, const Series& H, const StructureMatrix& S) {
    const double scale = max_abs_coefficient(poisson_bracket(F, poisson_bracket(G, H, S), S)) +
                         max_abs_coefficient(poisson_bracket(G, poisson_bracket(H, F, S), S)) +
                         max_abs_coefficient(poisson_bracket(H, poisson_bracket(F, G, S), S));
    return max_abs_coefficient(jacobi_sum(F, G, H, S)) <= 1e-12 * std::max(1.0, scale);
  };
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + trial % 3;
    const int m = 1 + (trial / 3) % 3;
    const auto sp = SeriesSpace::make(n, m, 0.5, {12, 8, 6});
    const auto S = random_constant_structure(sp, rng);
    const Series F = random_series(sp, rng, sh);
    const Series G = add(trial % 2 ? Series::eta(sp) : Series(sp), random_series(sp, rng, sh));
    const Series H = random_series(sp, rng, sh);
    const std::string at = fmt::format("constant trial {}", trial);
    t.check(poisson_bracket(F, G, S) == neg(poisson_bracket(G, F, S)), at + ": antisymmetry");
    t.check(poisson_bracket(F, F, S).empty(), at + ": {F,F}");
    const Series lhs = poisson_bracket(mul(F, H), G, S);
    const Series rhs = add(mul(F, poisson_bracket(H, G, S)), mul(H, poisson_bracket(F, G, S)));
    t.check(rel(lhs, rhs) <= 1e-12, at + ": Leibniz");
    t.check(jacobi_ok(F, G, H, S), at + ": Jacobi");
  }
  const auto sp = SeriesSpace::make(2, 1, 0.5, {8, 12, 4});
  const auto S = jacobi_instance(sp, {0.0});
  const Shape small{3, 2, 1, 0, 1, 0, true, 1.0};
  for (int trial = 0; trial < 30; ++trial) {
    const Series F = random_series(sp, rng, small);
    const Series G = random_series(sp, rng, small);
    const Series H = random_series(sp, rng, small);
    const std::string at = fmt::format("y-dependent trial {}", trial);
    t.check(poisson_bracket(F, G, S) == neg(poisson_bracket(G, F, S)), at + ": antisymmetry");
    t.check(jacobi_ok(F, G, H, S), at + ": Jacobi");
  }
  return t.verdict("60 constant-block and 30 y-dependent instances");
}

Verdict homological_residual() {
  std::mt19937_64 rng(3);
  Tally t;
  double worst = 0.0;
  const double a = 0.5;
  const auto sp = SeriesSpace::make(2, 2, a, {8, 3, 4});
  const auto S = StructureMatrix::canonical(sp);
  for (int trial = 0; trial < 100; ++trial) {
    // Golden-ratio family: s(1, φ) and s(φ, -1).
    const double s = 0.5 + 0.25 * (trial % 7);
    const std::vector<double> w = trial % 2 ? std::vector<double>{s, s * std::numbers::phi}
                                            : std::vector<double>{s * std::numbers::phi, -s};
    const FrequencyData freq = FrequencyData::make(S, w, 1.0, 8);
    const Series r = random_series(sp, rng, Shape{8, 4, 2, 1, 4, 0, true, 1.0});
    const HomologicalSolution sol = solve_scalar(r, freq, a);
    Series lhs = partial_xi(sol.phi);
    for (int l = 0; l < 2; ++l) lhs = add(lhs, scale(partial_x(sol.phi, l), freq.omega[static_cast<std::size_t>(l)]));
    const double res = weighted_norm(sub(lhs, r), {}).K / weighted_norm(r, {}).K;
    worst = std::max(worst, res);
    t.check(res <= 1e-12, fmt::format("trial {}: residual {:.2e}", trial, res));
  }
  return t.verdict(fmt::format("100 right-hand sides, worst relative residual {:.2e}", worst));
}

Verdict lie_vs_flow() {
  std::mt19937_64 rng(4);
  Tally t;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int kind = trial % 3;
    const auto sp = kind == 2 ? SeriesSpace::make(2, 1, 0.5, {12, 8, 4})
                              : SeriesSpace::make(1 + kind, 1 + kind, 0.5, {12, 8, 4});
    const StructureMatrix S = kind == 2 ? jacobi_instance(sp, {0.0}) : StructureMatrix::canonical(sp);
    Series chi = random_series(sp, rng, Shape{3, 2, 1, 0, 1, 0, true, 1.0});
    const double norm = weighted_norm(chi, {}).K;
    if (norm == 0.0) chi = Series::from_terms(sp, {{ModeKey{std::vector<int>(static_cast<std::size_t>(sp->n()), 0),
                                                             std::vector<int>(static_cast<std::size_t>(sp->m()), 0), 0, 1},
                                                     1.0}});
    chi = scale(chi, 1e-3 / weighted_norm(chi, {}).K);
    for (int k = 0; k < 3; ++k) {
      const ExtendedPoint q = random_point(rng, sp->m(), sp->n(), 0.3);
      const double d = lie_vs_flow_check(chi, S, q, 1e-13);
      worst = std::max(worst, d);
      t.check(d <= 1e-8, fmt::format("trial {}: distance {:.2e}", trial, d));
    }
  }
  return t.verdict(fmt::format("20 generating functions, worst coordinate gap {:.2e}", worst));
}

Verdict quadratic_signature() {
  Tally t;
  const RunResult r1 = run(benchmark_problem(1e-3), 5, 0.0);
  const RunResult r2 = run(benchmark_problem(5e-4), 5, 0.0);
  const double ratio = r2.trace.eps[1] / r1.trace.eps[1];
  t.check(ratio >= 0.2 && ratio <= 0.3, fmt::format("ratio {:.4f}", ratio));
  // Least-squares slope q of log ε_{j+1} = q log ε_j + c over the 5 steps.
  double worst_q = std::numeric_limits<double>::infinity();
  for (const RunResult* r : {&r1, &r2}) {
    const auto& e = r->trace.eps;
    t.check(e.size() == 6, "5 steps recorded");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double count = static_cast<double>(e.size() - 1);
    for (std::size_t j = 0; j + 1 < e.size(); ++j) {
      const double x = std::log(e[j]), y = std::log(e[j + 1]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double q = (count * sxy - sx * sy) / (count * sxx - sx * sx);
    worst_q = std::min(worst_q, q);
    t.check(q >= 1.7, fmt::format("fitted exponent {:.3f}", q));
  }
  return t.verdict(fmt::format("ε₁ ratio {:.4f}, fitted exponent ≥ {:.3f}", ratio, worst_q));
}

Verdict norm_bound() {
  std::mt19937_64 rng(6);
  Tally t;
  const double e2 = std::exp(2.0);
  const double dt = 0.5;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + trial % 3;
    const int m = 1 + (trial / 3) % 2;
    const auto sp = SeriesSpace::make(n, m, 0.5, {12, 8, 8});
    const auto S = random_constant_structure(sp, rng);
    const WeightedNormParams at{0.8, 0.6};
    const WeightedNormParams inner = at.scaled(1.0 - dt);
    const double gamma = gamma_rho_sigma(S, at);
    const Series chi = random_series(sp, rng, Shape{3, 2, 1, 0, 1, 0, true, 0.1});
    const Series psi = random_series(sp, rng, Shape{3, 2, 1, 0, 1, 0, true, 1.0});
    const double chi_n = weighted_norm(chi, at).K;
    const double psi_n = weighted_norm(psi, at).K;
    Series term = psi;
    double factorial = 1.0;
    for (int s = 1; s <= 4; ++s) {
      factorial *= s;
      term = lie_derivative(chi, term, S);
      const double lhs = weighted_norm(term, inner).K;
      const double rhs = factorial / e2 * std::pow(4.0 * e2 * gamma / (dt * dt), s) * std::pow(chi_n, s) * psi_n;
      if (rhs > 0.0) worst = std::max(worst, lhs / rhs);
      t.check(lhs <= rhs, fmt::format("pair {} s {}: {:.3e} > {:.3e}", trial, s, lhs, rhs));
    }
  }
  return t.verdict(fmt::format("50 pairs, s = 1..4, worst lhs/rhs {:.2e}", worst));
}

Verdict torus_persistence() {
  Tally t;
  const Problem p = benchmark_problem(1e-3);
  const RunResult r = run(p, 3, 1e-12);
  const TorusReport rep = torus_persistence_report(p, r.chi_list, r.params, 100.0, 1e-10, 8);
  t.check(rep.orbits.size() == 8, "8 angles");
  t.check(rep.action_improvement >= 10.0, fmt::format("action improvement {:.3g}", rep.action_improvement));
  return t.verdict(fmt::format("action drift {:.3e} naive vs {:.3e} mapped, factor {:.3g}", rep.naive_error,
                               rep.mapped_error, rep.action_improvement));
}

Verdict time_untouched() {
  std::mt19937_64 rng(8);
  Tally t;
  long evaluations = 0;
  std::vector<Problem> problems{benchmark_problem(1e-3), io::load_problem(kProblems / "golden_2dof.json")};
  for (const Problem& p : problems) {
    const RunResult r = run(p, 3, 0.0);
    const ComposedMap map(r.chi_list, r.structure, r.params);
    std::vector<LieCoordinateMap> single;
    for (std::size_t j = 0; j < r.chi_list.size(); ++j) {
      single.push_back(lie_coordinate_map(r.chi_list[j], r.structure, {r.params[j].rho, r.params[j].sigma}));
    }
    for (int i = 0; i < 200; ++i) {
      ExtendedPoint z = random_point(rng, p.m, p.n, 0.1);
      z.xi = std::ldexp(static_cast<double>(rng() >> 11), -53) * 50.0 * (i % 5);
      const ExtendedPoint f = map.forward(z);
      const ExtendedPoint b = map.inverse(z);
      t.check(f.xi == z.xi, "forward ξ");
      t.check(b.xi == z.xi, "inverse ξ");
      evaluations += 2;
      // compose_map rebuilds every coordinate map per call.
      if (i < 4) {
        t.check(compose_map(r.chi_list, z, r.structure).xi == z.xi, "compose_map ξ");
        ++evaluations;
      }
      for (const auto& m : single) {
        t.check(m.apply(z).xi == z.xi, "single map ξ");
        ++evaluations;
      }
    }
  }
  return t.verdict(fmt::format("{} map evaluations, ξ unchanged bitwise", evaluations));
}

Verdict schedule_audit() {
  Tally t;
  const Initialization init = init_from_problem(benchmark_problem(1e-3));
  const ConstantsLedger& c = init.constants;
  const auto sched = parameter_schedule(init.u0, 200, c.D, c.eps0_threshold, c.omega_norm, 1e-300);
  const IterationParams& u0 = sched.front();
  const IterationParams& u = sched.back();
  const double rho = u.rho / u0.rho, sigma = u.sigma / u0.sigma, ups = u.upsilon / u0.upsilon;
  t.check(std::abs(rho - 0.25) <= 0.01 * 0.25, fmt::format("ρ₂₀₀/ρ₀ = {:.6f}", rho));
  t.check(std::abs(sigma - 0.25) <= 0.01 * 0.25, fmt::format("σ₂₀₀/σ₀ = {:.6f}", sigma));
  t.check(std::abs(ups - 0.5) <= 0.01 * 0.5, fmt::format("υ₂₀₀/υ₀ = {:.6f}", ups));
  for (const auto& v : sched) {
    t.check(v.rho > u0.rho / 4 && v.sigma > u0.sigma / 4 && v.upsilon > u0.upsilon / 2, "lower bounds");
  }
  return t.verdict(fmt::format("ρ/ρ₀ {:.4f} (target 0.25), σ/σ₀ {:.4f} (0.25), υ/υ₀ {:.6f} (0.5)", rho, sigma, ups));
}

struct TempDir {
  fs::path path;
  explicit TempDir(int tag) {
    path = fs::temp_directory_path() / fmt::format("poisson_kam_acceptance_{}_{}", ::getpid(), tag);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

Verdict determinism() {
  Tally t;
  const TempDir a(0), b(1);
  std::ostringstream out, err;
  for (const char* name : {"benchmark_1dof.json", "golden_2dof.json"}) {
    const fs::path problem = kProblems / name;
    const int ca = cli::dispatch({"normalize", problem, a.path, {}}, out, err);
    const int cb = cli::dispatch({"normalize", problem, b.path, {}}, out, err);
    t.check(ca == cb, fmt::format("{}: exit codes {} and {}", name, ca, cb));
    const std::string ta = io::read_file(a.path / "trace.json");
    t.check(!ta.empty() && ta == io::read_file(b.path / "trace.json"), fmt::format("{}: trace.json differs", name));
  }
  return t.verdict("two normalize runs per problem, trace.json compared bytewise");
}

struct Criterion {
  const char* name;
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"algebra suite", algebra_suite},
      {"bracket suite", bracket_suite},
      {"homological residual", homological_residual},
      {"Lie series vs time-1 flow", lie_vs_flow},
      {"quadratic convergence signature", quadratic_signature},
      {"Lie-series norm bound", norm_bound},
      {"torus persistence", torus_persistence},
      {"transform leaves time untouched", time_untouched},
      {"parameter schedule limits", schedule_audit},
      {"determinism", determinism},
  };
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: %s [--only N]\n", argv[0]);
      return 2;
    }
  }
  if (only < 0 || only > static_cast<int>(criteria.size())) {
    std::fprintf(stderr, "criterion %d does not exist\n", only);
    return 2;
  }

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (only != 0 && id != only) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].run();
    } catch (const std::exception& e) {
      v = {false, fmt::format("threw: {}", e.what())};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %2d %s: %s [%.1fs]\n", v.pass ? "PASS" : "FAIL", id, criteria[i].name, v.detail.c_str(), secs);
    std::fflush(stdout);
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
