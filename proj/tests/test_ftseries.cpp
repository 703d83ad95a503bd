#include <doctest.h>

#include "support.hpp"

using namespace poisson_kam;
using namespace test_support;

namespace {

SpacePtr space_1d(double a = 0.5) { return SeriesSpace::make(1, 1, a, {8, 4, 4}); }
SpacePtr space_nm(int n, int m, double a = 0.5) { return SeriesSpace::make(n, m, a, {8, 4, 4}); }

ModeKey key1(int k, int alpha, int e = 0, int p = 0) { return ModeKey{{k}, {alpha}, e, p}; }

Series cos_x(const SpacePtr& sp, int p = 0) {
  return Series::from_terms(sp, {{key1(1, 0, 0, p), 0.5}, {key1(-1, 0, 0, p), 0.5}});
}

}  // namespace

TEST_SUITE("ftseries") {

TEST_CASE("add: identity, two modes, inverse") {
  const auto sp = space_1d();
  std::mt19937_64 rng(11);
  const Series f = random_series(sp, rng);
  CHECK(add(f, Series(sp)) == f);

  const Series e_plus = Series::monomial(sp, key1(1, 0));
  const Series e_minus = Series::monomial(sp, key1(-1, 0));
  const Series s = add(e_plus, e_minus);
  CHECK(s.size() == 2);
  CHECK(s.coefficient(key1(1, 0)) == cplx(1.0));
  CHECK(s.coefficient(key1(-1, 0)) == cplx(1.0));

  CHECK(add(f, scale(f, -1.0)).empty());
}

TEST_CASE("add: mismatched spaces are a structural error") {
  const Series f = Series::constant(space_1d(0.5), 1.0);
  const Series g = Series::constant(space_1d(0.25), 1.0);
  try {
    (void)add(f, g);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::structural);
  }
}

TEST_CASE("mul: powers, decay exponents, cos squared") {
  const auto sp = space_nm(1, 2);
  const Series y1 = Series::action(sp, 0);
  const Series y1sq = mul(y1, y1);
  REQUIRE(y1sq.size() == 1);
  CHECK(y1sq.coefficient(ModeKey{{0}, {2, 0}, 0, 0}) == cplx(1.0));

  const auto s1 = space_1d();
  const Series a = Series::monomial(s1, key1(1, 0, 0, 1));
  const Series b = Series::monomial(s1, key1(-1, 0, 0, 1));
  const Series ab = mul(a, b);
  REQUIRE(ab.size() == 1);
  CHECK(ab.coefficient(key1(0, 0, 0, 2)) == cplx(1.0));

  const Series c2 = mul(cos_x(s1), cos_x(s1));
  CHECK(c2.coefficient(key1(0, 0)).real() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(c2.coefficient(key1(2, 0)).real() == doctest::Approx(0.25));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int i = 0; i < 20; ++i) {
    const std::vector<cplx> x{u(rng)}, y{u(rng)};
    const double expect = std::cos(x[0].real()) * std::cos(x[0].real());
    CHECK(std::abs(eval(c2, y, x, 0.0, 0.0) - expect) < 1e-12);
  }
}

TEST_CASE("mul: η overflow is an invariant violation") {
  const auto sp = space_1d();
  const Series eta = Series::eta(sp);
  try {
    (void)mul(eta, eta);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invariant_violation);
  }
}

TEST_CASE("mul: discarded products are counted") {
  const auto sp = SeriesSpace::make(1, 1, 0.5, {2, 2, 2});
  const Series f = Series::monomial(sp, key1(2, 0, 0, 0), 3.0);
  const Series g = mul(f, f);
  CHECK(g.empty());
  CHECK(g.truncation_loss() == doctest::Approx(9.0));
}

TEST_CASE("partials") {
  const auto s1 = space_1d(0.5);
  const Series decay = Series::monomial(s1, key1(0, 0, 0, 1));
  const Series dxi = partial_xi(decay);
  CHECK(dxi.coefficient(key1(0, 0, 0, 1)) == cplx(-0.5));

  const Series e3 = Series::monomial(s1, key1(3, 0));
  CHECK(partial_x(e3, 0).coefficient(key1(3, 0)) == cplx(0.0, 3.0));

  const auto s2 = space_nm(1, 2);
  const Series f = Series::monomial(s2, ModeKey{{0}, {2, 1}, 0, 0});
  const Series d = partial_y(f, 0);
  REQUIRE(d.size() == 1);
  CHECK(d.coefficient(ModeKey{{0}, {1, 1}, 0, 0}) == cplx(2.0));

  const Series eta_y = Series::monomial(s1, key1(0, 1, 1, 0), 2.0);
  CHECK(partial_eta(eta_y).coefficient(key1(0, 1)) == cplx(2.0));
  CHECK(partial_eta(Series::action(s1, 0)).empty());
  CHECK(partial_x(Series::constant(s1, 4.0), 0).empty());
}

TEST_CASE("eval") {
  const auto sp = space_nm(2, 2);
  std::mt19937_64 rng(3);
  const auto p = random_point(rng, 2, 2);
  CHECK(eval_at(Series::constant(sp, 1.0), p) == cplx(1.0));

  const std::vector<double> w{0.7, -1.3};
  const Series lin = linear_form(sp, w);
  const std::vector<cplx> y{0.7, -1.3}, x{0.4, 2.0};
  CHECK(std::abs(eval(lin, y, x, 0.0, 0.0) - (0.49 + 1.69)) < 1e-15);

  const auto s1 = space_1d();
  const std::vector<cplx> zero{0.0};
  CHECK(std::abs(eval(cos_x(s1, 1), zero, zero, 0.0, 0.0) - 1.0) < 1e-15);
}

TEST_CASE("weighted_norm") {
  const auto s1 = space_1d();
  const DecayBound b = weighted_norm(cos_x(s1), {0.7, std::log(2.0)});
  CHECK(b.K == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(b.p == 0);

  const DecayBound y = weighted_norm(Series::action(s1, 0), {0.3, 1.0});
  CHECK(y.K == doctest::Approx(0.3));
  CHECK(y.p == 0);

  const DecayBound d = weighted_norm(Series::monomial(s1, key1(0, 0, 0, 2), 5.0), {1.0, 1.0});
  CHECK(d.K == 5.0);
  CHECK(d.p == 2);

  try {
    (void)weighted_norm(Series::eta(s1), {1.0, 1.0});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::domain);
  }
}

TEST_CASE("taylor_split") {
  const auto s1 = space_1d();
  const Series f = Series::from_terms(s1, {{key1(0, 0), 3.0}, {key1(0, 1), 2.0}, {key1(0, 2), 1.0}, {key1(0, 3), 1.0}});
  const TaylorSplit t = taylor_split(f);
  CHECK(t.A == Series::constant(s1, 3.0));
  CHECK(t.B[0] == Series::constant(s1, 2.0));
  CHECK(t.C.at(0, 0) == Series::constant(s1, 2.0));
  CHECK(t.R == Series::monomial(s1, key1(0, 3)));
  CHECK(reassemble(t) == f);

  const auto s3 = space_nm(1, 3);
  const Series g = Series::from_terms(s3, {{ModeKey{{1}, {0, 1, 0}, 0, 1}, 0.5}, {ModeKey{{-1}, {0, 1, 0}, 0, 1}, 0.5}});
  const TaylorSplit u = taylor_split(g);
  CHECK(u.A.empty());
  CHECK(u.B[0].empty());
  CHECK(u.B[2].empty());
  CHECK(u.B[1].size() == 2);
  CHECK(u.R.empty());
  for (const auto& c : u.C.entries) CHECK(c.empty());

  std::mt19937_64 rng(17);
  for (int i = 0; i < 50; ++i) {
    const Series r = random_series(s3, rng, Shape{12, 4, 4, 0, 4, 0, true, 1.0});
    const TaylorSplit s = taylor_split(r);
    CHECK(reassemble(s) == r);
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) CHECK(s.C.at(a, b) == s.C.at(b, a));
    }
  }
}

TEST_CASE("canonical form stores no zeros") {
  const auto sp = space_nm(2, 2);
  std::mt19937_64 rng(23);
  for (int i = 0; i < 50; ++i) {
    const Series f = random_series(sp, rng);
    const Series g = random_series(sp, rng);
    for (const Series& h : {add(f, g), mul(f, g), sub(f, f), partial_x(f, 1), partial_y(g, 0)}) {
      for (const auto& t : h.terms()) CHECK(t.c != cplx{});
    }
  }
}

TEST_CASE("properties on random series") {
  std::mt19937_64 rng(2024);
  const Shape small{5, 2, 1, 0, 1, 0, true, 1.0};
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + trial % 3;
    const int m = 1 + (trial / 3) % 3;
    const auto sp = space_nm(n, m);
    const Series f = random_series(sp, rng, small);
    const Series g = random_series(sp, rng, small);
    const Series h = random_series(sp, rng, small);

    CHECK(add(f, g) == add(g, f));
    CHECK(mul(f, g) == mul(g, f));
    CHECK(relative_difference(add(add(f, g), h), add(f, add(g, h))) <= 1e-15);
    CHECK(relative_difference(mul(mul(f, g), h), mul(f, mul(g, h))) <= 1e-12);
    CHECK(relative_difference(mul(f, add(g, h)), add(mul(f, g), mul(f, h))) <= 1e-12);

    const auto p = random_point(rng, m, n);
    const cplx lhs = eval_at(mul(f, g), p);
    const cplx rhs = eval_at(f, p) * eval_at(g, p);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));

    for (int l = 0; l < n; ++l) {
      const Series left = partial_x(mul(f, g), l);
      const Series right = add(mul(partial_x(f, l), g), mul(f, partial_x(g, l)));
      CHECK(relative_difference(left, right) <= 1e-12);
    }
    for (int i = 0; i < m; ++i) {
      const Series left = partial_y(mul(f, g), i);
      const Series right = add(mul(partial_y(f, i), g), mul(f, partial_y(g, i)));
      CHECK(relative_difference(left, right) <= 1e-12);
    }

    const WeightedNormParams wp{0.8, 0.6};
    const DecayBound nf = weighted_norm(f, wp), ng = weighted_norm(g, wp), nfg = weighted_norm(mul(f, g), wp);
    CHECK(nfg.K <= nf.K * ng.K * (1.0 + 1e-14));
    if (!f.empty() && !g.empty() && !mul(f, g).empty()) CHECK(nfg.p >= nf.p + ng.p);
    CHECK(weighted_norm(f, wp.scaled(0.9)).K <= nf.K);

    CHECK(is_real_symmetric(f));
    CHECK(is_real_symmetric(add(f, g)));
    CHECK(is_real_symmetric(mul(f, g)));
    for (int l = 0; l < n; ++l) CHECK(is_real_symmetric(partial_x(f, l)));
    for (int i = 0; i < m; ++i) CHECK(is_real_symmetric(partial_y(f, i)));
    CHECK(is_real_symmetric(partial_xi(f)));
    const TaylorSplit t = taylor_split(f);
    CHECK(is_real_symmetric(t.A));
    CHECK(is_real_symmetric(t.R));
    for (const auto& b : t.B) CHECK(is_real_symmetric(b));
    for (const auto& c : t.C.entries) CHECK(is_real_symmetric(c));
  }
}

TEST_CASE("shift_actions re-expands around the new origin") {
  const auto sp = SeriesSpace::make(2, 2, 0.5, {6, 5, 3});
  std::mt19937_64 rng(41);
  for (int i = 0; i < 20; ++i) {
    const Series f = random_series(sp, rng, Shape{6, 2, 5, 0, 2, 0, true, 1.0});
    const std::vector<double> ys{0.3, -0.7};
    const Series g = shift_actions(f, ys);
    auto p = random_point(rng, 2, 2);
    ExtendedPoint q = p;
    for (int j = 0; j < 2; ++j) q.y[static_cast<std::size_t>(j)] += ys[static_cast<std::size_t>(j)];
    CHECK(std::abs(eval_at(g, p) - eval_at(f, q)) <= 1e-12 * std::max(1.0, std::abs(eval_at(f, q))));
  }
}

TEST_CASE("dot equals the sum of products") {
  const auto sp = space_nm(2, 2);
  std::mt19937_64 rng(9);
  std::vector<Series> fs, gs;
  Series ref(sp);
  for (int i = 0; i < 4; ++i) {
    fs.push_back(random_series(sp, rng));
    gs.push_back(random_series(sp, rng));
    ref = add(ref, mul(fs.back(), gs.back()));
  }
  CHECK(relative_difference(dot(fs, gs), ref) <= 1e-14);
}

TEST_CASE("series spaces are interned") {
  CHECK(SeriesSpace::make(2, 1, 0.5, {3, 2, 1}) == SeriesSpace::make(2, 1, 0.5, {3, 2, 1}));
  CHECK(SeriesSpace::make(2, 1, 0.5, {3, 2, 1}) != SeriesSpace::make(2, 1, 0.5, {3, 2, 2}));
}

}  // TEST_SUITE
