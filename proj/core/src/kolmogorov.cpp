#include "poisson_kam/kolmogorov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include <fmt/format.h>

namespace poisson_kam {

namespace {

constexpr double kE = std::numbers::e;

WeightedNormParams at(const IterationParams& u) { return {u.rho, u.sigma}; }

// Every term except additive constants (k = 0, α = 0, e = 0, p = 0).
Series drop_secular(const Series& f) {
  return select(f, [](const SeriesSpace& sp, std::uint32_t idx) {
    return !(sp.p_of(idx) == 0 && sp.e_of(idx) == 0 && sp.k_norm_of_rank(sp.k_rank_of(idx)) == 0 &&
             sp.degree_of_rank(sp.alpha_rank_of(idx)) == 0);
  });
}

Series quadratic_and_rest(const SeriesMatrix& C, const Series& R) {
  const auto& space = R.space_ptr();
  TaylorSplit part{Series(space), SeriesVector(static_cast<std::size_t>(C.rows), Series(space)), C, R};
  return reassemble(part);
}

int min_p_of(const HamiltonianDecomposition& H) {
  int p = std::numeric_limits<int>::max();
  if (!H.A.empty()) p = std::min(p, H.A.min_p());
  for (const auto& b : H.B) {
    if (!b.empty()) p = std::min(p, b.min_p());
  }
  return p == std::numeric_limits<int>::max() ? 0 : p;
}

double l1(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Decomposition

Series HamiltonianDecomposition::reassembled() const {
  const TaylorSplit part{A, B, C, R};
  return add(add(eta, linear), reassemble(part));
}

Series HamiltonianDecomposition::h() const { return add(linear, quadratic_and_rest(C, R)); }

Series HamiltonianDecomposition::g() const {
  Series out = A;
  for (std::size_t i = 0; i < B.size(); ++i) {
    if (!B[i].empty()) out = add(out, mul(B[i], Series::action(A.space_ptr(), static_cast<int>(i))));
  }
  return out;
}

double measure_eps(const HamiltonianDecomposition& H, double sigma) {
  const WeightedNormParams p{1.0, sigma};
  return std::max(weighted_norm(H.A, p).K, weighted_norm(H.B, p));
}

// ---------------------------------------------------------------------------
// Constants

ThetaConstants measured_theta(const SeriesSpace& space, const FrequencyData& freq, double a,
                              double d, double sigma) {
  const double ds = d * sigma;
  const double tau = freq.tau;
  ThetaConstants th;
  for (std::uint32_t kr = 0; kr < space.k_count(); ++kr) {
    const auto* k = space.k_of_rank(kr);
    const int kn = space.k_norm_of_rank(kr);
    double kw = 0.0;
    for (int l = 0; l < space.n(); ++l) kw += static_cast<double>(k[l]) * freq.omega[static_cast<std::size_t>(l)];
    for (int p = 0; p <= space.truncation().p_max; ++p) {
      if (kn == 0 && p == 0) continue;
      const double div = std::abs(cplx(-static_cast<double>(p) * a, kw));
      if (div < kDivisorGuard) continue;
      const double base = a * std::pow(ds, 2.0 * tau) * std::exp(-static_cast<double>(kn) * ds) / div;
      th.theta1 = std::max(th.theta1, base);
      th.theta2 = std::max(th.theta2, base * static_cast<double>(kn) * ds);
    }
  }
  th.theta2 = std::max(th.theta2, th.theta1);
  return th;
}

ConstantsLedger constants_ledger(const StructureMatrix& S, const IterationParams& u0,
                                 const FrequencyData& freq, double theta1, double theta2,
                                 double M_h, double M_f, double epsilon, double rho) {
  const int n = S.n();
  const int m = S.m();
  const double tau = u0.tau;
  const double a = u0.a;
  ConstantsLedger c;
  c.theta1 = theta1;
  c.theta2 = theta2;
  c.rho_star = u0.rho / 4.0;
  c.sigma_star = u0.sigma / 4.0;
  c.omega_norm = l1(freq.omega);

  double b0 = 0.0, b1w = 0.0;
  for (int l = 0; l < n; ++l) {
    for (int j = 0; j < m; ++j) {
      b0 = std::max(b0, std::abs(S.B0(l, j)));
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += S.B1(l, i, j) * freq.omega_tilde[static_cast<std::size_t>(i)];
      b1w = std::max(b1w, std::abs(s));
    }
  }
  c.B0_norm = static_cast<double>(n * m) * b0;
  c.B1_omega_norm = static_cast<double>(n * m) * b1w;

  double entry = 0.0;
  const WeightedNormParams ball{rho, 1.0};
  for (const auto& e : S.B12().entries) entry = std::max(entry, weighted_norm(e, ball).K);
  for (const auto& e : S.B22().entries) entry = std::max(entry, weighted_norm(e, ball).K);
  c.M_B = static_cast<double>((n + m) * (n + m)) * entry;
  c.M_h = M_h;
  c.M_f = M_f;
  c.M_h_tilde = M_h + epsilon * M_f;
  c.Gamma = gamma_rho_sigma(S, {u0.rho, u0.sigma});

  const double two_over = 2.0 / c.sigma_star;
  const double rs = c.rho_star * c.sigma_star;
  c.M0 = theta1 * std::pow(two_over, 2.0 * tau);
  c.M1 = n * theta2 * std::pow(two_over, 2.0 * tau + 1.0);
  c.M2 = 1.0 + c.M1 * (c.B0_norm + c.B1_omega_norm);
  c.M3 = m * c.M2 * theta1 * std::pow(two_over, 2.0 * tau);
  c.M4 = m * n * c.M2 * theta2 * std::pow(two_over, 2.0 * tau + 1.0);
  c.M5 = c.M0 + c.M3;
  c.M6 = c.M1 + c.M4;
  c.M7 = 16.0 * c.M_B * c.M5 * (1.0 + 8.0 * kE * kE * c.M_B * c.M_h_tilde * c.M5 + kE * kE * c.M5) /
         std::pow(rs, 4.0);
  c.M8 = 32.0 * m * c.M_B * c.M_h_tilde * c.M5 /
         std::pow(c.rho_star * c.rho_star * c.sigma_star, 2.0);
  c.D = 32.0 * kE * kE * c.omega_norm * c.M_B / (rs * rs) * std::max({c.M6, c.M7, c.M8});
  c.eps0_theory = m * epsilon * M_f / u0.rho;
  c.eps0_threshold = std::pow(a, 4.0) / (c.D * std::pow(12.0, 8.0 * (tau + 1.0)));
  c.theoretical_mode = c.eps0_theory <= c.eps0_threshold;
  return c;
}

SmallnessValues smallness(const ConstantsLedger& c, const IterationParams& u, double eps) {
  const double a = u.a;
  const double tau = u.tau;
  const double rs = c.rho_star * c.sigma_star;
  SmallnessValues v;
  v.piccolaunmezzo = eps * c.D / (std::pow(a, 4.0) * u.upsilon * u.upsilon * std::pow(u.d, 8.0 * (tau + 1.0)));
  v.smallone = eps * 8.0 * kE * kE * c.M_B * c.M5 /
               (a * a * u.upsilon * std::pow(u.d, 4.0 * tau + 3.0) * rs * rs);
  v.smallv = eps * c.M8 / (a * a * u.upsilon * u.upsilon * std::pow(u.d, 4.0 * tau + 5.0) * u.zeta);
  return v;
}

double quadratic_bound(const ConstantsLedger& c, const IterationParams& u, double eps) {
  return c.D * eps * eps /
         (std::pow(u.a, 4.0) * u.upsilon * u.upsilon * std::pow(u.d, 8.0 * (u.tau + 1.0)));
}

double schedule_d(int j, double D, double eps0, double a, double tau, double upsilon,
                  double d_floor) {
  if (j == 0) return 1.0 / 6.0;
  const double jj = static_cast<double>(j);
  const double d_eq = std::pow(D * eps0 / (std::pow(a, 4.0) * upsilon * upsilon), 1.0 / (8.0 * (tau + 1.0))) *
                      (jj + 2.0) * (jj + 2.0) / std::pow(jj + 1.0, 4.0);
  return std::min(std::max(d_eq, d_floor), 1.0 / 6.0);
}

IterationParams advance(const IterationParams& u, int j_next, double D, double eps0,
                        double omega_norm, double d_floor) {
  IterationParams v = u;
  v.rho = (1.0 - 3.0 * u.d) * u.rho;
  v.sigma = (1.0 - 3.0 * u.d) * u.sigma;
  v.upsilon = (1.0 - std::pow(u.d, 4.0 * u.tau + 3.0)) * u.upsilon;
  v.d = schedule_d(j_next, D, eps0, u.a, u.tau, v.upsilon, d_floor);
  v.zeta = v.d * v.sigma / (4.0 * omega_norm);
  return v;
}

std::vector<IterationParams> parameter_schedule(const IterationParams& u0, int steps, double D,
                                                double eps0, double omega_norm, double d_floor) {
  std::vector<IterationParams> out{u0};
  out.front().eps = eps0;
  for (int j = 1; j <= steps; ++j) {
    IterationParams v = advance(out.back(), j, D, eps0, omega_norm, d_floor);
    v.eps = eps0 * std::pow(static_cast<double>(j + 1), -16.0 * (u0.tau + 1.0));
    out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Initialization

namespace {

// Real parts of the y_i coefficients.
std::vector<double> action_gradient(const Series& h, int n, int m) {
  std::vector<double> out(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    ModeKey key{std::vector<int>(static_cast<std::size_t>(n), 0), std::vector<int>(static_cast<std::size_t>(m), 0), 0, 0};
    key.alpha[static_cast<std::size_t>(i)] = 1;
    out[static_cast<std::size_t>(i)] = h.coefficient(key).real();
  }
  return out;
}

}  // namespace

ProblemFrequencies problem_frequencies(const Problem& problem) {
  const Series h_shift = shift_actions(problem.h, problem.y_star);
  ProblemFrequencies f{action_gradient(h_shift, problem.n, problem.m), {}};
  const auto& S = problem.structure;
  f.omega.assign(static_cast<std::size_t>(S.n()), 0.0);
  for (int l = 0; l < S.n(); ++l) {
    for (int i = 0; i < S.m(); ++i) f.omega[static_cast<std::size_t>(l)] += S.B0(l, i) * f.omega_tilde[static_cast<std::size_t>(i)];
  }
  return f;
}

Initialization init_from_problem(const Problem& problem) {
  const auto& space = problem.space;
  if (!problem.h.space().same_as(*space) || !problem.f.space().same_as(*space) ||
      !problem.structure.space()->same_as(*space)) {
    throw Error(ErrorKind::structural, "problem: h, f and the structure matrix use different spaces");
  }
  for (const auto& t : problem.h.terms()) {
    if (space->k_norm_of_rank(space->k_rank_of(t.index)) != 0 || space->e_of(t.index) != 0 ||
        space->p_of(t.index) != 0) {
      throw Error(ErrorKind::domain, "problem: h must depend on the actions only");
    }
  }
  for (const auto& t : problem.f.terms()) {
    if (space->e_of(t.index) != 0) throw Error(ErrorKind::domain, "problem: f depends on η");
    if (space->p_of(t.index) == 0) {
      throw Error(ErrorKind::domain,
                  "problem: f has a non-decaying term (p = 0); the perturbation must decay in time");
    }
  }
  if (!(problem.a > 0.0)) throw Error(ErrorKind::domain, "problem: decay rate a must be positive");

  StructureMatrix S = problem.structure.shifted();
  const int m = problem.m;
  const auto& opt = problem.options;

  const Series h_shift = drop_secular(shift_actions(problem.h, problem.y_star));
  const Series f_shift = shift_actions(problem.f, problem.y_star);

  std::vector<double> omega_tilde = action_gradient(h_shift, problem.n, m);
  FrequencyData freq = FrequencyData::make(S, omega_tilde, problem.tau, problem.trunc.k_max);

  HamiltonianDecomposition H{omega_tilde,          Series::eta(space),
                             linear_form(space, omega_tilde),
                             Series(space),        {},
                             SeriesMatrix(),       Series(space),
                             Series(space)};
  const Series rest = add(sub(h_shift, H.linear), scale(f_shift, problem.epsilon));
  TaylorSplit split = taylor_split(rest);
  H.A = std::move(split.A);
  H.B = std::move(split.B);
  H.C = std::move(split.C);
  H.R = std::move(split.R);
  H.total = add(add(H.eta, H.linear), rest);

  IterationParams u0;
  u0.a = problem.a;
  u0.tau = problem.tau;
  u0.gamma = freq.gamma;
  u0.rho = opt.rho / 2.0;
  u0.sigma = opt.sigma / 2.0;
  u0.upsilon = opt.upsilon / 2.0;
  u0.d = 1.0 / 6.0;
  u0.zeta = u0.d * u0.sigma / (4.0 * l1(freq.omega));
  u0.eps = measure_eps(H, u0.sigma);

  ThetaConstants theta = measured_theta(*space, freq, problem.a, u0.d, u0.sigma);
  if (opt.theta1) theta.theta1 = *opt.theta1;
  if (opt.theta2) theta.theta2 = *opt.theta2;
  const double M_h = weighted_norm(h_shift, {opt.rho, opt.sigma}).K;
  const double M_f = weighted_norm(f_shift, {opt.rho, opt.sigma / 2.0}).K;
  ConstantsLedger constants = constants_ledger(S, u0, freq, theta.theta1, theta.theta2, M_h, M_f,
                                               problem.epsilon, opt.rho);
  return Initialization{std::move(H), u0, std::move(freq), std::move(S), constants};
}

// ---------------------------------------------------------------------------
// One step

StepResult normalization_step(const HamiltonianDecomposition& H, const StructureMatrix& S,
                              const IterationParams& u, const FrequencyData& freq,
                              const ConstantsLedger& constants, int j,
                              const StepOptions& options) {
  const auto& space = S.space();
  const double a = u.a;
  const WeightedNormParams norm_at = at(u);

  StepRecord rec;
  rec.j = j;
  rec.u = u;
  rec.eps_in = u.eps;
  rec.eps_quad_bound = quadratic_bound(constants, u, u.eps);
  rec.eps_schedule = constants.eps0_theory * std::pow(static_cast<double>(j + 1), -16.0 * (u.tau + 1.0));
  rec.conditions = smallness(constants, u, u.eps);
  rec.conditions_hold = rec.conditions.piccolaunmezzo <= 0.5 && rec.conditions.smallone <= 0.5 &&
                        rec.conditions.smallv <= 0.5;
  if (options.enforce_theory && !rec.conditions_hold) {
    throw Error(ErrorKind::smallness_violated,
                fmt::format("step {}: smallness conditions {:.3g}, {:.3g}, {:.3g} (each must be ≤ 1/2)", j,
                            rec.conditions.piccolaunmezzo, rec.conditions.smallone,
                            rec.conditions.smallv));
  }

  // χ = S + T·y from the two homological equations.
  const HomologicalSolution S_sol = solve_S(H.A, freq, a, norm_at);
  const SeriesMatrix E = build_E(S, H.C, H.omega_tilde);
  const std::vector<HomologicalSolution> T_sol = solve_T(H.B, S_sol.phi, E, freq, a, norm_at);
  Series chi = S_sol.phi;
  rec.S_residual = S_sol.residual_norm;
  rec.min_divisor = S_sol.min_divisor;
  for (std::size_t i = 0; i < T_sol.size(); ++i) {
    rec.T_residual = std::max(rec.T_residual, T_sol[i].residual_norm);
    if (T_sol[i].phi.empty()) continue;
    if (rec.min_divisor == 0.0 || (T_sol[i].min_divisor > 0.0 && T_sol[i].min_divisor < rec.min_divisor)) {
      rec.min_divisor = T_sol[i].min_divisor;
    }
    chi = add(chi, mul(T_sol[i].phi, Series::action(space, static_cast<int>(i))));
  }

  rec.lie.contraction = lie_contraction(chi, S, norm_at, options.lie_d_tilde, &rec.lie.gamma,
                                        &rec.lie.chi_norm);
  rec.chi_norm = rec.lie.chi_norm;
  if (rec.lie.contraction > 0.5) {
    throw Error(ErrorKind::divergence_risk,
                fmt::format("step {}: Lie contraction factor {:.6g} exceeds 1/2", j, rec.lie.contraction));
  }

  const Series h = H.h();
  const Series g = H.g();
  const Series chi_xi = partial_xi(chi);
  const Series Lh = poisson_bracket(chi, h, S);
  const Series Lg = poisson_bracket(chi, g, S);

  // g + χ_ξ + {χ,h}: its |α| ≤ 1 part vanishes by construction and is only
  // measured; the rest is Q.
  const Series Z = add(add(g, chi_xi), Lh);
  rec.homological_residual = majorant(select_degree(Z, 0, 1), norm_at);
  const Series Q = select_degree(Z, 2, std::numeric_limits<int>::max());

  // R̂ = {χ,g} + Σ_{s≥2} 𝓛_χˢ(η + h + g)/s!.
  Series R_hat = Lg;
  Series t = add(add(chi_xi, Lh), Lg);
  for (int s = 2; s <= options.lie_max_terms; ++s) {
    t = scale(poisson_bracket(chi, t, S), 1.0 / static_cast<double>(s));
    if (t.empty()) break;
    R_hat = add(R_hat, t);
    rec.remainder_terms = s;
    rec.lie.terms = s;
    rec.lie.last_term_norm = majorant(t, norm_at);
    if (rec.lie.last_term_norm <= options.lie_rel_tol * majorant(R_hat, norm_at)) break;
  }
  rec.lie.tail_bound = rec.lie.last_term_norm * rec.lie.contraction / (1.0 - rec.lie.contraction);

  const Series rest = drop_secular(add(add(quadratic_and_rest(H.C, H.R), Q), R_hat));
  TaylorSplit split = taylor_split(rest);
  rec.split_exact = reassemble(split) == rest;

  HamiltonianDecomposition next{H.omega_tilde, H.eta, H.linear, std::move(split.A), std::move(split.B),
                                std::move(split.C), std::move(split.R), Series(space)};
  next.total = add(add(next.eta, next.linear), rest);
  rec.truncation_loss = rest.truncation_loss();

  IterationParams u_next = advance(u, j + 1, constants.D, constants.eps0_theory, constants.omega_norm,
                                   options.d_floor);
  u_next.eps = measure_eps(next, u_next.sigma);
  rec.eps_out = u_next.eps;
  rec.A_norm = weighted_norm(next.A, at(u_next)).K;
  rec.B_norm = weighted_norm(next.B, at(u_next));
  rec.min_p_AB = min_p_of(next);

  // Column-sum surrogate for the operator norm of C on the monomial basis.
  double cnorm = 0.0;
  for (int col = 0; col < next.C.cols; ++col) {
    double s = 0.0;
    for (int row = 0; row < next.C.rows; ++row) s += weighted_norm(next.C.at(row, col), at(u_next)).K;
    cnorm = std::max(cnorm, s);
  }
  rec.C_operator_norm = cnorm;
  rec.C_bound_holds = cnorm <= 1.0 / u_next.upsilon;

  return StepResult{std::move(next), std::move(chi), u_next, rec};
}

// ---------------------------------------------------------------------------
// Driver

const char* to_string(RunStatus status) noexcept {
  switch (status) {
    case RunStatus::converged: return "converged";
    case RunStatus::max_steps: return "max_steps";
    case RunStatus::refused: return "refused";
    case RunStatus::diverged: return "diverged";
  }
  return "unknown";
}

RunResult run(const Problem& problem, int max_steps, double target_eps) {
  Initialization init = init_from_problem(problem);
  RunResult result{NormalizationTrace{}, init.H, {}, init.structure, {}};
  auto& trace = result.trace;
  trace.constants = init.constants;
  trace.freq = init.freq;
  trace.u0 = init.u0;
  trace.empirical_mode = !init.constants.theoretical_mode;
  if (trace.empirical_mode) {
    trace.warnings.push_back(fmt::format(
        "empirical mode: eps0 = {:.6g} exceeds the threshold a^4/(D 12^(8(tau+1))) = {:.6g}; "
        "the theoretical guarantee does not apply, measured convergence is reported",
        init.constants.eps0_theory, init.constants.eps0_threshold));
  }

  const auto& opt = problem.options;
  StepOptions step_opt;
  step_opt.lie_d_tilde = opt.lie_d_tilde;
  step_opt.lie_rel_tol = opt.lie_rel_tol;
  step_opt.lie_max_terms = opt.lie_max_terms;
  step_opt.d_floor = opt.d_floor;
  step_opt.enforce_theory = !trace.empirical_mode;

  IterationParams u = init.u0;
  trace.eps.push_back(u.eps);
  int increases = 0;
  bool decided = false;
  for (int j = 0; j < max_steps; ++j) {
    if (u.eps <= target_eps) {
      trace.status = RunStatus::converged;
      decided = true;
      break;
    }
    std::optional<StepResult> step;
    try {
      step.emplace(normalization_step(result.normal_form, result.structure, u, trace.freq,
                                      trace.constants, j, step_opt));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::divergence_risk && e.kind() != ErrorKind::smallness_violated) throw;
      trace.status = RunStatus::refused;
      trace.message = e.what();
      decided = true;
      break;
    }
    result.params.push_back(u);
    result.chi_list.push_back(step->chi);
    trace.steps.push_back(step->record);
    result.normal_form = std::move(step->H);
    const double prev = u.eps;
    u = step->u_next;
    trace.eps.push_back(u.eps);
    increases = u.eps > prev ? increases + 1 : 0;
    if (increases >= 2) {
      trace.status = RunStatus::diverged;
      trace.message = fmt::format("measured eps increased in two consecutive steps (step {})", j);
      decided = true;
      break;
    }
  }
  if (!decided) trace.status = u.eps <= target_eps ? RunStatus::converged : RunStatus::max_steps;
  return result;
}

// ---------------------------------------------------------------------------
// Coordinate change

ComposedMap::ComposedMap(const std::vector<Series>& chi_list, const StructureMatrix& S,
                         const std::vector<IterationParams>& params, const LieOptions& options) {
  for (std::size_t j = 0; j < chi_list.size(); ++j) {
    const WeightedNormParams p =
        j < params.size() ? WeightedNormParams{params[j].rho, params[j].sigma} : WeightedNormParams{};
    maps_.push_back(lie_coordinate_map(chi_list[j], S, p, options));
    inverse_maps_.push_back(lie_coordinate_map(neg(chi_list[j]), S, p, options));
  }
}

ExtendedPoint ComposedMap::forward(const ExtendedPoint& p) const {
  ExtendedPoint w = p;
  for (auto it = maps_.rbegin(); it != maps_.rend(); ++it) w = it->apply(w);
  return w;
}

ExtendedPoint ComposedMap::inverse(const ExtendedPoint& p) const {
  ExtendedPoint w = p;
  for (const auto& map : inverse_maps_) w = map.apply(w);
  return w;
}

ExtendedPoint compose_map(const std::vector<Series>& chi_list, const ExtendedPoint& point,
                          const StructureMatrix& S) {
  return ComposedMap(chi_list, S, {}).forward(point);
}

}  // namespace poisson_kam
