#include "poisson_kam/homological.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>

#include <fmt/format.h>

namespace poisson_kam {

namespace {

// Calls fn(k, |k|) for every k with 1 ≤ |k| ≤ k_max whose first nonzero
// component is positive (one representative per ±k pair).
template <class Fn>
void enumerate_ball(std::vector<int>& k, std::size_t pos, int budget, bool sign_fixed, Fn& fn) {
  if (pos == k.size()) {
    if (sign_fixed) {
      int norm = 0;
      for (int v : k) norm += std::abs(v);
      fn(k, norm);
    }
    return;
  }
  const int lo = sign_fixed ? -budget : 0;
  for (int v = lo; v <= budget; ++v) {
    k[pos] = v;
    enumerate_ball(k, pos + 1, budget - std::abs(v), sign_fixed || v > 0, fn);
  }
  k[pos] = 0;
}

template <class Fn>
void for_each_half_wavevector(int n, int k_max, Fn fn) {
  std::vector<int> k(static_cast<std::size_t>(n), 0);
  enumerate_ball(k, 0, k_max, false, fn);
}

double k_dot(const int* k, const std::vector<double>& omega) {
  double s = 0.0;
  for (std::size_t l = 0; l < omega.size(); ++l) s += static_cast<double>(k[l]) * omega[l];
  return s;
}

}  // namespace

DiophantineTable diophantine_table(const std::vector<double>& omega, double tau, int k_max) {
  if (omega.empty()) throw Error(ErrorKind::domain, "diophantine: empty frequency vector");
  if (k_max < 1) throw Error(ErrorKind::domain, "diophantine: K_max must be at least 1");
  double scale = 0.0;
  for (double w : omega) scale = std::max(scale, std::abs(w));
  if (scale == 0.0) throw Error(ErrorKind::resonance, "diophantine: frequency vector is zero");

  DiophantineTable table;
  table.gamma_K = std::numeric_limits<double>::infinity();
  table.shells.resize(static_cast<std::size_t>(k_max));
  for (int s = 1; s <= k_max; ++s) {
    auto& sh = table.shells[static_cast<std::size_t>(s - 1)];
    sh.shell = s;
    sh.divisor = std::numeric_limits<double>::infinity();
    sh.gamma_shell = std::numeric_limits<double>::infinity();
  }
  const int n = static_cast<int>(omega.size());
  for_each_half_wavevector(n, k_max, [&](const std::vector<int>& k, int norm) {
    const double div = std::abs(k_dot(k.data(), omega));
    if (div <= 1e-12 * scale * norm) {
      std::string ks;
      for (std::size_t l = 0; l < k.size(); ++l) ks += (l ? ", " : "") + std::to_string(k[l]);
      throw Error(ErrorKind::resonance,
                  fmt::format("k·ω = 0 for k = ({}) with |k| = {} ≤ K_max = {}", ks, norm, k_max));
    }
    auto& sh = table.shells[static_cast<std::size_t>(norm - 1)];
    if (div < sh.divisor) {
      sh.divisor = div;
      sh.k = k;
      sh.gamma_shell = div * std::pow(static_cast<double>(norm), tau);
    }
  });
  for (const auto& sh : table.shells) table.gamma_K = std::min(table.gamma_K, sh.gamma_shell);
  return table;
}

double diophantine_profile(const std::vector<double>& omega, double tau, int k_max) {
  return diophantine_table(omega, tau, k_max).gamma_K;
}

FrequencyData FrequencyData::make(const StructureMatrix& S, std::vector<double> omega_tilde,
                                  double tau, int k_max) {
  if (static_cast<int>(omega_tilde.size()) != S.m()) {
    throw Error(ErrorKind::structural, "frequency: ω̃ has the wrong dimension");
  }
  FrequencyData f;
  f.omega_tilde = std::move(omega_tilde);
  f.omega.assign(static_cast<std::size_t>(S.n()), 0.0);
  for (int l = 0; l < S.n(); ++l) {
    for (int i = 0; i < S.m(); ++i) f.omega[static_cast<std::size_t>(l)] += S.B0(l, i) * f.omega_tilde[static_cast<std::size_t>(i)];
  }
  f.tau = tau;
  f.k_max = k_max;
  f.gamma = k_max >= 1 ? diophantine_profile(f.omega, tau, k_max) : 0.0;
  return f;
}

Series homological_operator(const Series& phi, const FrequencyData& freq) {
  const auto& sp = phi.space();
  const double a = sp.decay_rate();
  std::vector<Term> out;
  out.reserve(phi.size());
  for (const auto& t : phi.terms()) {
    const auto* k = sp.k_of_rank(sp.k_rank_of(t.index));
    double kw = 0.0;
    for (int l = 0; l < sp.n(); ++l) kw += static_cast<double>(k[l]) * freq.omega[static_cast<std::size_t>(l)];
    const cplx div(-static_cast<double>(sp.p_of(t.index)) * a, kw);
    out.push_back({t.index, t.c * div});
  }
  Series r(phi.space_ptr());
  std::erase_if(out, [](const Term& t) { return t.c == cplx{}; });
  SeriesAccess::terms(r) = std::move(out);
  return r;
}

HomologicalSolution solve_scalar(const Series& psi, const FrequencyData& freq, double a,
                                 const WeightedNormParams& params) {
  const auto& sp = psi.space();
  if (static_cast<int>(freq.omega.size()) != sp.n()) {
    throw Error(ErrorKind::structural, "solve_scalar: ω has the wrong dimension");
  }
  if (a != sp.decay_rate()) {
    throw Error(ErrorKind::structural, "solve_scalar: decay rate differs from the series space");
  }
  HomologicalSolution sol{Series(psi.space_ptr()), std::numeric_limits<double>::infinity(), 0.0};
  std::vector<Term> out;
  out.reserve(psi.size());
  for (const auto& t : psi.terms()) {
    if (sp.e_of(t.index) != 0) throw Error(ErrorKind::domain, "solve_scalar: right-hand side depends on η");
    const auto* k = sp.k_of_rank(sp.k_rank_of(t.index));
    const int p = sp.p_of(t.index);
    double kw = 0.0;
    bool k_zero = true;
    for (int l = 0; l < sp.n(); ++l) {
      kw += static_cast<double>(k[l]) * freq.omega[static_cast<std::size_t>(l)];
      if (k[l] != 0) k_zero = false;
    }
    if (k_zero && p == 0) {
      throw Error(ErrorKind::secular_term,
                  "homological equation forced by a term with k = 0 and p = 0");
    }
    const cplx div(-static_cast<double>(p) * a, kw);
    const double mag = std::abs(div);
    if (mag < kDivisorGuard) {
      throw Error(ErrorKind::near_resonance,
                  fmt::format("small divisor |i k·ω - p a| = {:.3g} below {:.0e}", mag, kDivisorGuard));
    }
    sol.min_divisor = std::min(sol.min_divisor, mag);
    out.push_back({t.index, t.c / div});
  }
  if (out.empty()) sol.min_divisor = 0.0;
  SeriesAccess::terms(sol.phi) = std::move(out);
  SeriesAccess::loss(sol.phi) = psi.truncation_loss();
  sol.residual_norm = weighted_norm(sub(homological_operator(sol.phi, freq), psi), params).K;
  return sol;
}

HomologicalSolution solve_S(const Series& A, const FrequencyData& freq, double a,
                            const WeightedNormParams& params) {
  return solve_scalar(neg(A), freq, a, params);
}

SeriesMatrix build_E(const StructureMatrix& S, const SeriesMatrix& C,
                     const std::vector<double>& omega_tilde) {
  const int n = S.n();
  const int m = S.m();
  if (C.rows != m || C.cols != m || static_cast<int>(omega_tilde.size()) != m) {
    throw Error(ErrorKind::structural, "build_E: C must be m×m and ω̃ of length m");
  }
  const auto& space = S.space();
  SeriesMatrix E(space, n, m);
  for (int l = 0; l < n; ++l) {
    for (int j = 0; j < m; ++j) {
      Series acc(space);
      for (int i = 0; i < m; ++i) {
        if (S.B0(l, i) != 0.0 && !C.at(i, j).empty()) acc = add(acc, scale(C.at(i, j), S.B0(l, i)));
      }
      double c = 0.0;
      for (int i = 0; i < m; ++i) c += S.B1(l, i, j) * omega_tilde[static_cast<std::size_t>(i)];
      if (c != 0.0) acc = add(acc, Series::constant(space, c));
      E.at(l, j) = std::move(acc);
    }
  }
  return E;
}

std::vector<HomologicalSolution> solve_T(const SeriesVector& B, const Series& S_gen,
                                         const SeriesMatrix& E, const FrequencyData& freq,
                                         double a, const WeightedNormParams& params) {
  const auto& sp = S_gen.space();
  const int n = sp.n();
  const int m = sp.m();
  if (static_cast<int>(B.size()) != m || E.rows != n || E.cols != m) {
    throw Error(ErrorKind::structural, "solve_T: B must have m entries and E must be n×m");
  }
  SeriesVector S_x;
  for (int l = 0; l < n; ++l) S_x.push_back(partial_x(S_gen, l));
  std::vector<HomologicalSolution> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    std::vector<Series> lhs, rhs;
    for (int l = 0; l < n; ++l) {
      if (S_x[static_cast<std::size_t>(l)].empty() || E.at(l, j).empty()) continue;
      lhs.push_back(S_x[static_cast<std::size_t>(l)]);
      rhs.push_back(E.at(l, j));
    }
    Series source = B[static_cast<std::size_t>(j)];
    if (!lhs.empty()) source = add(dot(lhs, rhs), source);
    out.push_back(solve_scalar(neg(source), freq, a, params));
  }
  return out;
}

}  // namespace poisson_kam
