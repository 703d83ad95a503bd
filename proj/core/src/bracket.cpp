#include "poisson_kam/bracket.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "poisson_kam/parallel.hpp"

namespace poisson_kam {

namespace {

constexpr double kE = std::numbers::e;

bool depends_on_y_only(const Series& f) {
  const auto& sp = f.space();
  for (const auto& t : f.terms()) {
    if (sp.k_norm_of_rank(sp.k_rank_of(t.index)) != 0 || sp.e_of(t.index) != 0 ||
        sp.p_of(t.index) != 0) {
      return false;
    }
  }
  return true;
}

double real_value_at(const Series& f, std::span<const double> y) {
  std::vector<cplx> yc(y.begin(), y.end());
  std::vector<cplx> x(static_cast<std::size_t>(f.space().n()), 0.0);
  return eval(f, yc, x, 0.0, 0.0).real();
}

// Products below this many term pairs are not worth a thread.
constexpr double kParallelPairs = 2.0e5;

}  // namespace

StructureMatrix::StructureMatrix(SeriesMatrix B12, SeriesMatrix B22, std::vector<double> y_star)
    : B12_(std::move(B12)), B22_(std::move(B22)), y_star_(std::move(y_star)) {
  m_ = B12_.rows;
  n_ = B12_.cols;
  if (m_ < 1 || n_ < 1 || B12_.entries.empty()) {
    throw Error(ErrorKind::structural, "structure matrix: B12 must be a non-empty m×n matrix");
  }
  space_ = B12_.entries.front().space_ptr();
  if (space_->m() != m_ || space_->n() != n_) {
    throw Error(ErrorKind::structural,
                fmt::format("structure matrix: B12 is {}×{} but the series space has m={}, n={}", m_,
                            n_, space_->m(), space_->n()));
  }
  if (B22_.rows != n_ || B22_.cols != n_) {
    throw Error(ErrorKind::structural, fmt::format("structure matrix: B22 must be {}×{}", n_, n_));
  }
  if (static_cast<int>(y_star_.size()) != m_) {
    throw Error(ErrorKind::structural, "structure matrix: y_star has the wrong dimension");
  }
  for (const auto* block : {&B12_, &B22_}) {
    for (const auto& e : block->entries) {
      if (!e.space().same_as(*space_)) {
        throw Error(ErrorKind::structural, "structure matrix: entries live in different spaces");
      }
      if (!depends_on_y_only(e)) {
        throw Error(ErrorKind::structural,
                    "structure matrix: entries must depend on the actions only (k = 0, e = 0, p = 0)");
      }
    }
  }
  for (int k = 0; k < n_; ++k) {
    for (int l = 0; l < n_; ++l) {
      if (!(B22_.at(k, l) == neg(B22_.at(l, k)))) {
        throw Error(ErrorKind::structural,
                    fmt::format("structure matrix: B22 is not skew-symmetric at ({}, {})", k, l));
      }
      if (!B22_.at(k, l).empty()) has_B22_ = true;
    }
  }

  B0_.assign(static_cast<std::size_t>(n_ * m_), 0.0);
  B1_.assign(static_cast<std::size_t>(n_ * m_ * m_), 0.0);
  for (int i = 0; i < m_; ++i) {
    for (int l = 0; l < n_; ++l) {
      const Series& b = B12_.at(i, l);
      B0_[static_cast<std::size_t>(l * m_ + i)] = -real_value_at(b, y_star_);
      for (int j = 0; j < m_; ++j) {
        B1_[static_cast<std::size_t>((l * m_ + i) * m_ + j)] =
            -real_value_at(partial_y(b, j), y_star_);
      }
    }
  }
}

StructureMatrix StructureMatrix::canonical(const SpacePtr& space) {
  if (space->m() != space->n()) {
    throw Error(ErrorKind::structural, "canonical structure needs m = n");
  }
  const int n = space->n();
  SeriesMatrix B12(space, n, n);
  SeriesMatrix B22(space, n, n);
  for (int i = 0; i < n; ++i) B12.at(i, i) = Series::constant(space, -1.0);
  return StructureMatrix(std::move(B12), std::move(B22), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

StructureMatrix StructureMatrix::shifted() const {
  SeriesMatrix B12(space_, m_, n_);
  SeriesMatrix B22(space_, n_, n_);
  for (std::size_t i = 0; i < B12.entries.size(); ++i) {
    B12.entries[i] = shift_actions(B12_.entries[i], y_star_);
  }
  // Shift the upper triangle and mirror it so skew-symmetry stays exact.
  for (int k = 0; k < n_; ++k) {
    for (int l = k + 1; l < n_; ++l) {
      B22.at(k, l) = shift_actions(B22_.at(k, l), y_star_);
      B22.at(l, k) = neg(B22.at(k, l));
    }
  }
  return StructureMatrix(std::move(B12), std::move(B22),
                         std::vector<double>(static_cast<std::size_t>(m_), 0.0));
}

bool StructureMatrix::constant_blocks() const {
  for (const auto* block : {&B12_, &B22_}) {
    for (const auto& e : block->entries) {
      for (const auto& t : e.terms()) {
        if (space_->degree_of_rank(space_->alpha_rank_of(t.index)) != 0) return false;
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Bracket

namespace {

struct Gradient {
  SeriesVector y;
  SeriesVector x;
  Series xi;
  Series eta;
};

Gradient gradient(const Series& F, const StructureMatrix& S) {
  Gradient g{{}, {}, partial_xi(F), partial_eta(F)};
  for (int i = 0; i < S.m(); ++i) g.y.push_back(partial_y(F, i));
  for (int l = 0; l < S.n(); ++l) g.x.push_back(partial_x(F, l));
  return g;
}

// Σ_l M_{rl} v_l for every row r of a series matrix.
SeriesVector apply_rows(const SeriesMatrix& M, const SeriesVector& v, const SpacePtr& space) {
  SeriesVector out;
  out.reserve(static_cast<std::size_t>(M.rows));
  std::vector<Series> lhs, rhs;
  for (int r = 0; r < M.rows; ++r) {
    lhs.clear();
    rhs.clear();
    for (int l = 0; l < M.cols; ++l) {
      if (M.at(r, l).empty() || v[static_cast<std::size_t>(l)].empty()) continue;
      lhs.push_back(M.at(r, l));
      rhs.push_back(v[static_cast<std::size_t>(l)]);
    }
    out.push_back(lhs.empty() ? Series(space) : dot(lhs, rhs));
  }
  return out;
}

// Half bracket P(F,G) = F_y·B12 G_x + ½ F_x·B22 G_x + F_ξ G_η, so that
// {F,G} = P(F,G) - P(G,F) holds for skew B22.
Series half_bracket(const Gradient& f, const Gradient& g, const StructureMatrix& S) {
  const auto& space = S.space();
  std::vector<Series> lhs, rhs;
  const SeriesVector v = apply_rows(S.B12(), g.x, space);
  for (int i = 0; i < S.m(); ++i) {
    if (f.y[static_cast<std::size_t>(i)].empty() || v[static_cast<std::size_t>(i)].empty()) continue;
    lhs.push_back(f.y[static_cast<std::size_t>(i)]);
    rhs.push_back(v[static_cast<std::size_t>(i)]);
  }
  if (S.has_B22()) {
    const SeriesVector u = apply_rows(S.B22(), g.x, space);
    for (int k = 0; k < S.n(); ++k) {
      if (f.x[static_cast<std::size_t>(k)].empty() || u[static_cast<std::size_t>(k)].empty()) continue;
      lhs.push_back(scale(f.x[static_cast<std::size_t>(k)], 0.5));
      rhs.push_back(u[static_cast<std::size_t>(k)]);
    }
  }
  if (!f.xi.empty() && !g.eta.empty()) {
    lhs.push_back(f.xi);
    rhs.push_back(g.eta);
  }
  if (lhs.empty()) return Series(space);
  return dot(lhs, rhs);
}

void require_space(const Series& f, const StructureMatrix& S, const char* what) {
  if (!f.space().same_as(*S.space())) {
    throw Error(ErrorKind::structural,
                fmt::format("{}: series and structure matrix use different truncations", what));
  }
}

}  // namespace

Series poisson_bracket(const Series& F, const Series& G, const StructureMatrix& S) {
  require_space(F, S, "poisson_bracket");
  require_space(G, S, "poisson_bracket");
  if (F.empty() || G.empty()) return Series(S.space());
  const Gradient gf = gradient(F, S);
  const Gradient gg = gradient(G, S);
  Series fg(S.space()), gf_(S.space());
  const double pairs = static_cast<double>(F.size()) * static_cast<double>(G.size());
  if (pairs > kParallelPairs) {
    parallel_for(2, [&](std::size_t which) {
      if (which == 0) fg = half_bracket(gf, gg, S);
      else gf_ = half_bracket(gg, gf, S);
    });
  } else {
    fg = half_bracket(gf, gg, S);
    gf_ = half_bracket(gg, gf, S);
  }
  return sub(fg, gf_);
}

SeriesVector lie_derivative_y(const Series& chi, const StructureMatrix& S) {
  require_space(chi, S, "lie_derivative_y");
  SeriesVector chi_x;
  for (int l = 0; l < S.n(); ++l) chi_x.push_back(partial_x(chi, l));
  SeriesVector out = apply_rows(S.B12(), chi_x, S.space());
  for (auto& v : out) v = neg(v);
  return out;
}

SeriesVector lie_derivative_x(const Series& chi, const StructureMatrix& S) {
  require_space(chi, S, "lie_derivative_x");
  SeriesVector chi_y, chi_x;
  for (int i = 0; i < S.m(); ++i) chi_y.push_back(partial_y(chi, i));
  for (int k = 0; k < S.n(); ++k) chi_x.push_back(partial_x(chi, k));
  SeriesVector out;
  std::vector<Series> lhs, rhs;
  for (int l = 0; l < S.n(); ++l) {
    lhs.clear();
    rhs.clear();
    for (int i = 0; i < S.m(); ++i) {
      if (chi_y[static_cast<std::size_t>(i)].empty() || S.B12().at(i, l).empty()) continue;
      lhs.push_back(chi_y[static_cast<std::size_t>(i)]);
      rhs.push_back(S.B12().at(i, l));
    }
    for (int k = 0; k < S.n(); ++k) {
      if (chi_x[static_cast<std::size_t>(k)].empty() || S.B22().at(k, l).empty()) continue;
      lhs.push_back(chi_x[static_cast<std::size_t>(k)]);
      rhs.push_back(S.B22().at(k, l));
    }
    out.push_back(lhs.empty() ? Series(S.space()) : dot(lhs, rhs));
  }
  return out;
}

Series jacobi_sum(const Series& F, const Series& G, const Series& H, const StructureMatrix& S) {
  const Series a = poisson_bracket(F, poisson_bracket(G, H, S), S);
  const Series b = poisson_bracket(G, poisson_bracket(H, F, S), S);
  const Series c = poisson_bracket(H, poisson_bracket(F, G, S), S);
  return add(add(a, b), c);
}

// ---------------------------------------------------------------------------
// Γ and Lie transforms

BlockNorms block_norms(const StructureMatrix& S, double rho) {
  const WeightedNormParams at{rho, 1.0};
  BlockNorms G;
  double mx12 = 0.0, mx22 = 0.0;
  for (const auto& e : S.B12().entries) mx12 = std::max(mx12, weighted_norm(e, at).K);
  for (const auto& e : S.B22().entries) mx22 = std::max(mx22, weighted_norm(e, at).K);
  G.G12 = static_cast<double>(S.m() * S.n()) * mx12;
  G.G22 = static_cast<double>(S.n() * S.n()) * mx22;
  return G;
}

double gamma_formula(const BlockNorms& G, double rho, double sigma) {
  const double ers = kE * rho * sigma;
  return (kE * kE * G.G11 * sigma * sigma + 2.0 * kE * G.G12 * rho * sigma + G.G22 * rho * rho) /
         (ers * ers);
}

double gamma_rho_sigma(const StructureMatrix& S, const WeightedNormParams& params) {
  if (!(params.rho > 0.0) || !(params.sigma > 0.0)) {
    throw Error(ErrorKind::domain, "gamma_rho_sigma: rho and sigma must be positive");
  }
  return gamma_formula(block_norms(S, params.rho), params.rho, params.sigma);
}

double lie_contraction(const Series& chi, const StructureMatrix& S,
                       const WeightedNormParams& params, double d_tilde, double* gamma_out,
                       double* chi_norm_out) {
  if (!(d_tilde > 0.0)) throw Error(ErrorKind::domain, "lie_contraction: d_tilde must be positive");
  const double gamma = gamma_rho_sigma(S, params);
  const double chi_norm = weighted_norm(chi, params).K;
  if (gamma_out) *gamma_out = gamma;
  if (chi_norm_out) *chi_norm_out = chi_norm;
  return 4.0 * kE * kE * gamma * chi_norm / (d_tilde * d_tilde);
}

namespace {

// Σ_{s≥1} t_s with t_s = 𝓛_χ t_{s-1}/s seeded by t_1; stops on the
// relative-size rule against `reference + Σ`.
Series lie_tail(const Series& chi, Series term, const StructureMatrix& S,
                const WeightedNormParams& params, const LieOptions& options, double reference,
                int& terms_used, double& last_norm) {
  Series sum(S.space());
  terms_used = 0;
  last_norm = 0.0;
  for (int s = 1; s <= options.max_terms; ++s) {
    if (s > 1) term = scale(lie_derivative(chi, term, S), 1.0 / static_cast<double>(s));
    if (term.empty()) break;
    sum = add(sum, term);
    terms_used = s;
    last_norm = majorant(term, params);
    if (last_norm <= options.rel_tol * (reference + majorant(sum, params))) break;
  }
  return sum;
}

}  // namespace

Series lie_transform(const Series& chi, const Series& F, const StructureMatrix& S,
                     const WeightedNormParams& params, double d_tilde, LieDiagnostics* diagnostics,
                     const LieOptions& options) {
  require_space(chi, S, "lie_transform");
  require_space(F, S, "lie_transform");
  if (chi.max_e() != 0) {
    throw Error(ErrorKind::domain, "lie_transform: generating function must not depend on η");
  }
  LieDiagnostics diag;
  diag.contraction = lie_contraction(chi, S, params, d_tilde, &diag.gamma, &diag.chi_norm);
  if (options.enforce_contraction && diag.contraction > 0.5) {
    throw Error(ErrorKind::divergence_risk,
                fmt::format("Lie contraction factor {:.6g} exceeds 1/2", diag.contraction));
  }
  Series out = F;
  if (!chi.empty() && !F.empty()) {
    // The stop rule compares each term with the running sum F + Σ.
    const Series tail = lie_tail(chi, lie_derivative(chi, F, S), S, params, options,
                                 majorant(F, params), diag.terms, diag.last_term_norm);
    out = add(F, tail);
  }
  diag.tail_bound = diag.contraction < 1.0
                        ? diag.last_term_norm * diag.contraction / (1.0 - diag.contraction)
                        : std::numeric_limits<double>::infinity();
  if (diagnostics) *diagnostics = diag;
  return out;
}

LieCoordinateMap lie_coordinate_map(const Series& chi, const StructureMatrix& S,
                                    const WeightedNormParams& params, const LieOptions& options) {
  require_space(chi, S, "lie_coordinate_map");
  LieCoordinateMap map{{}, {}, Series(S.space())};
  int used = 0;
  double last = 0.0;
  for (auto& t1 : lie_derivative_y(chi, S)) {
    map.dy.push_back(lie_tail(chi, std::move(t1), S, params, options, 0.0, used, last));
  }
  for (auto& t1 : lie_derivative_x(chi, S)) {
    map.dx.push_back(lie_tail(chi, std::move(t1), S, params, options, 0.0, used, last));
  }
  map.deta = lie_tail(chi, partial_xi(chi), S, params, options, 0.0, used, last);
  return map;
}

ExtendedPoint LieCoordinateMap::apply(const ExtendedPoint& p) const {
  ExtendedPoint out = p;
  for (std::size_t i = 0; i < dy.size(); ++i) out.y[i] += eval(dy[i], p.y, p.x, p.eta, p.xi);
  for (std::size_t l = 0; l < dx.size(); ++l) out.x[l] += eval(dx[l], p.y, p.x, p.eta, p.xi);
  out.eta += eval(deta, p.y, p.x, p.eta, p.xi);
  return out;
}

}  // namespace poisson_kam
