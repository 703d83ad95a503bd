#pragma once

// Random instances and small helpers shared by the test executables.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "poisson_kam/bracket.hpp"
#include "poisson_kam/ftseries.hpp"
#include "poisson_kam/kolmogorov.hpp"

namespace test_support {

using namespace poisson_kam;

struct Shape {
  int terms = 6;
  int k_max = 2;   // |k| of generated modes
  int l_max = 1;   // |α| of generated modes
  int p_min = 0;
  int p_max = 1;
  int e_max = 0;
  bool real = true;
  double scale = 1.0;
};

inline std::vector<int> random_k(std::mt19937_64& rng, int n, int k_max) {
  std::vector<int> k(static_cast<std::size_t>(n), 0);
  std::uniform_int_distribution<int> budget_d(0, k_max);
  int budget = budget_d(rng);
  for (int l = 0; l < n && budget > 0; ++l) {
    std::uniform_int_distribution<int> v(-budget, budget);
    k[static_cast<std::size_t>(l)] = v(rng);
    budget -= std::abs(k[static_cast<std::size_t>(l)]);
  }
  return k;
}

inline std::vector<int> random_alpha(std::mt19937_64& rng, int m, int l_max) {
  std::vector<int> a(static_cast<std::size_t>(m), 0);
  std::uniform_int_distribution<int> budget_d(0, l_max);
  int budget = budget_d(rng);
  for (int i = 0; i < m && budget > 0; ++i) {
    std::uniform_int_distribution<int> v(0, budget);
    a[static_cast<std::size_t>(i)] = v(rng);
    budget -= a[static_cast<std::size_t>(i)];
  }
  return a;
}

/// Random series; with shape.real the coefficients satisfy c(-k) = conj c(k).
inline Series random_series(const SpacePtr& space, std::mt19937_64& rng, const Shape& shape = {}) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> pd(shape.p_min, shape.p_max);
  std::uniform_int_distribution<int> ed(0, shape.e_max);
  std::vector<std::pair<ModeKey, cplx>> terms;
  for (int t = 0; t < shape.terms; ++t) {
    ModeKey key{random_k(rng, space->n(), shape.k_max), random_alpha(rng, space->m(), shape.l_max), ed(rng), pd(rng)};
    const cplx c(shape.scale * u(rng), shape.scale * u(rng));
    if (!shape.real) {
      terms.emplace_back(key, c);
      continue;
    }
    ModeKey mirror = key;
    for (auto& v : mirror.k) v = -v;
    terms.emplace_back(key, c);
    terms.emplace_back(mirror, std::conj(c));
  }
  return Series::from_terms(space, terms);
}

inline std::vector<cplx> random_vector(std::mt19937_64& rng, int size, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<cplx> v;
  for (int i = 0; i < size; ++i) v.emplace_back(u(rng), 0.0);
  return v;
}

inline ExtendedPoint random_point(std::mt19937_64& rng, int m, int n, double y_scale = 0.3) {
  std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ExtendedPoint p;
  p.y = random_vector(rng, m, y_scale);
  for (int l = 0; l < n; ++l) p.x.emplace_back(ang(rng), 0.0);
  p.eta = u(rng);
  p.xi = u(rng);
  return p;
}

inline cplx eval_at(const Series& f, const ExtendedPoint& p) { return eval(f, p.y, p.x, p.eta, p.xi); }

inline Series constant(const SpacePtr& space, double v) { return Series::constant(space, v); }

/// Constant blocks: random B12, skew B22.
inline StructureMatrix random_constant_structure(const SpacePtr& space, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int m = space->m();
  const int n = space->n();
  SeriesMatrix B12(space, m, n), B22(space, n, n);
  for (int i = 0; i < m; ++i) {
    for (int l = 0; l < n; ++l) B12.at(i, l) = constant(space, u(rng));
  }
  for (int l = 0; l < n; ++l) {
    for (int k = l + 1; k < n; ++k) {
      B22.at(l, k) = constant(space, u(rng));
      B22.at(k, l) = neg(B22.at(l, k));
    }
  }
  return StructureMatrix(std::move(B12), std::move(B22), std::vector<double>(static_cast<std::size_t>(m), 0.0));
}

/// m = 1, n = 2 Poisson structure with B12 = g(y)(β₁, β₂) and
/// B22 = c(y)[[0, 1], [-1, 0]]; Jacobi holds because the rows of B12 are
/// parallel for every y.
inline StructureMatrix jacobi_instance(const SpacePtr& space, std::vector<double> y_star = {0.0}) {
  const Series y = Series::action(space, 0);
  const Series g = add(constant(space, -1.0), scale(mul(y, y), 0.3));
  const Series c = add(constant(space, 0.5), scale(y, 0.7));
  SeriesMatrix B12(space, 1, 2), B22(space, 2, 2);
  B12.at(0, 0) = scale(g, 1.0);
  B12.at(0, 1) = scale(g, 0.6);
  B22.at(0, 1) = c;
  B22.at(1, 0) = neg(c);
  return StructureMatrix(std::move(B12), std::move(B22), std::move(y_star));
}

/// Canonical 1-dof benchmark: h = ½y², f = e^{-aξ}cos x, y* = 1.
inline Problem benchmark_problem(double epsilon, Truncation trunc = {32, 4, 40}, double a = 0.5) {
  const SpacePtr space = SeriesSpace::make(1, 1, a, trunc);
  const Series h = Series::from_terms(space, {{ModeKey{{0}, {2}, 0, 0}, 0.5}});
  const Series f = Series::from_terms(space, {{ModeKey{{1}, {0}, 0, 1}, 0.5}, {ModeKey{{-1}, {0}, 0, 1}, 0.5}});
  SeriesMatrix B12(space, 1, 1);
  B12.at(0, 0) = constant(space, -1.0);
  StructureMatrix S(std::move(B12), SeriesMatrix(space, 1, 1), {1.0});
  return Problem{1, 1, a, epsilon, 1.0, {1.0}, trunc, space, h, f, std::move(S), ProblemOptions{}};
}

inline double max_abs(const std::vector<cplx>& a, const std::vector<cplx>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace test_support
