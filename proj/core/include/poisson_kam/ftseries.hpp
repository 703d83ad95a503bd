#pragma once

// Sparse truncated Fourier–Taylor series in
//   angles x (Fourier modes k ∈ Z^n), actions y (Taylor powers α ∈ N^m),
//   the time-conjugate momentum η (power e ∈ {0,1}) and time ξ through the
//   decay factors e^{-p a ξ}, p ≥ 0.
//
// A term is c · e^{i k·x} · y^α · η^e · e^{-p a ξ}. Truncation keeps
// |k| = Σ|k_l| ≤ K_max, |α| ≤ L_max and p ≤ P_max; anything beyond is
// discarded and its magnitude added to the series' truncation loss.

#include <complex>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "poisson_kam/error.hpp"

namespace poisson_kam {

using cplx = std::complex<double>;

inline constexpr int kMaxDims = 8;

struct Truncation {
  int k_max = 0;
  int l_max = 0;
  int p_max = 0;

  friend bool operator==(const Truncation&, const Truncation&) = default;
};

struct ModeKey {
  std::vector<int> k;
  std::vector<int> alpha;
  int e = 0;
  int p = 0;

  int k_norm() const;
  int degree() const;

  friend bool operator==(const ModeKey&, const ModeKey&) = default;
};

struct WeightedNormParams {
  double rho = 1.0;
  double sigma = 1.0;

  WeightedNormParams scaled(double factor) const { return {rho * factor, sigma * factor}; }
};

/// Statement ‖f‖ ≤ K e^{-p a |ξ|}.
struct DecayBound {
  double K = 0.0;
  int p = 0;
};

class SeriesSpace;
using SpacePtr = std::shared_ptr<const SeriesSpace>;

/// Dimensions, decay rate and truncation shared by a family of series, plus the
/// dense mode indexing used by the kernels. Instances are interned: equal
/// parameters give the same pointer.
class SeriesSpace {
 public:
  static SpacePtr make(int n, int m, double a, Truncation trunc, double drop_tolerance = 1e-15);

  int n() const { return n_; }
  int m() const { return m_; }
  double decay_rate() const { return a_; }
  const Truncation& truncation() const { return trunc_; }
  double drop_tolerance() const { return drop_tolerance_; }

  std::size_t size() const { return size_; }

  bool contains(const ModeKey& key) const;
  std::uint32_t index(const ModeKey& key) const;
  ModeKey key(std::uint32_t index) const;

  // Decoding without allocation, for the kernels.
  int p_of(std::uint32_t idx) const { return static_cast<int>(idx % (trunc_.p_max + 1)); }
  int e_of(std::uint32_t idx) const { return static_cast<int>((idx / (trunc_.p_max + 1)) % 2); }
  std::uint32_t alpha_rank_of(std::uint32_t idx) const {
    return (idx / (2 * (trunc_.p_max + 1))) % static_cast<std::uint32_t>(alpha_count_);
  }
  std::uint32_t k_rank_of(std::uint32_t idx) const {
    return idx / (2 * (trunc_.p_max + 1) * static_cast<std::uint32_t>(alpha_count_));
  }
  const std::int8_t* k_of_rank(std::uint32_t rank) const { return &k_table_[rank * slot_]; }
  const std::uint8_t* alpha_of_rank(std::uint32_t rank) const { return &alpha_table_[rank * slot_]; }
  int k_norm_of_rank(std::uint32_t rank) const { return k_norm_[rank]; }
  int degree_of_rank(std::uint32_t rank) const { return degree_[rank]; }

  /// Rank of a wavevector / multi-index given componentwise, or -1 if it is
  /// outside the truncation.
  std::int32_t k_rank(const int* k) const;
  std::int32_t alpha_rank(const int* alpha) const;

  std::uint32_t compose(std::uint32_t k_rank, std::uint32_t alpha_rank, int e, int p) const {
    return ((k_rank * static_cast<std::uint32_t>(alpha_count_) + alpha_rank) * 2 +
            static_cast<std::uint32_t>(e)) *
               static_cast<std::uint32_t>(trunc_.p_max + 1) +
           static_cast<std::uint32_t>(p);
  }

  std::uint32_t k_count() const { return static_cast<std::uint32_t>(k_norm_.size()); }
  std::uint32_t alpha_count() const { return static_cast<std::uint32_t>(alpha_count_); }

  bool same_as(const SeriesSpace& other) const;

  SeriesSpace(int n, int m, double a, Truncation trunc, double drop_tolerance);

 private:
  int n_;
  int m_;
  double a_;
  Truncation trunc_;
  double drop_tolerance_;
  std::size_t size_ = 0;
  std::size_t slot_ = kMaxDims;
  std::size_t alpha_count_ = 0;

  std::vector<std::int8_t> k_table_;
  std::vector<std::uint8_t> alpha_table_;
  std::vector<int> k_norm_;
  std::vector<int> degree_;
  std::vector<std::int32_t> k_box_to_rank_;
  std::vector<std::int32_t> alpha_box_to_rank_;
};

struct Term {
  std::uint32_t index;
  cplx c;
};

class Series {
 public:
  explicit Series(SpacePtr space);

  static Series constant(SpacePtr space, cplx value);
  static Series monomial(SpacePtr space, const ModeKey& key, cplx value = 1.0);
  /// Coordinate function y_i (i zero-based).
  static Series action(SpacePtr space, int i);
  /// The momentum η conjugate to time.
  static Series eta(SpacePtr space);
  /// Sums duplicate keys; keys outside the truncation throw.
  static Series from_terms(SpacePtr space, const std::vector<std::pair<ModeKey, cplx>>& terms);

  const SeriesSpace& space() const { return *space_; }
  const SpacePtr& space_ptr() const { return space_; }

  std::span<const Term> terms() const { return terms_; }
  std::size_t size() const { return terms_.size(); }
  bool empty() const { return terms_.empty(); }

  cplx coefficient(const ModeKey& key) const;
  ModeKey key(const Term& term) const { return space_->key(term.index); }

  /// Σ|c| of products/terms discarded by truncation while building this value
  /// (inherited from the operands).
  double truncation_loss() const { return truncation_loss_; }

  int max_e() const;
  int min_p() const;

  friend bool operator==(const Series& a, const Series& b);

 private:
  friend class SeriesAccess;
  SpacePtr space_;
  std::vector<Term> terms_;
  double truncation_loss_ = 0.0;
};

using SeriesVector = std::vector<Series>;

struct SeriesMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<Series> entries;

  SeriesMatrix() = default;
  SeriesMatrix(SpacePtr space, int rows, int cols);

  Series& at(int i, int j) { return entries[static_cast<std::size_t>(i * cols + j)]; }
  const Series& at(int i, int j) const { return entries[static_cast<std::size_t>(i * cols + j)]; }
};

// ---------------------------------------------------------------------------
// Algebra

Series add(const Series& f, const Series& g);
Series sub(const Series& f, const Series& g);
Series neg(const Series& f);
Series scale(const Series& f, cplx factor);
/// Truncated product. η-degree overflow (e_f + e_g > 1) throws.
Series mul(const Series& f, const Series& g);

/// Σ_i fs[i]·gs[i], accumulated in one pass.
Series dot(std::span<const Series> fs, std::span<const Series> gs);

inline Series operator+(const Series& f, const Series& g) { return add(f, g); }
inline Series operator-(const Series& f, const Series& g) { return sub(f, g); }
inline Series operator-(const Series& f) { return neg(f); }
inline Series operator*(const Series& f, const Series& g) { return mul(f, g); }
inline Series operator*(cplx s, const Series& f) { return scale(f, s); }

Series partial_x(const Series& f, int l);
Series partial_y(const Series& f, int i);
Series partial_eta(const Series& f);
Series partial_xi(const Series& f);

// ---------------------------------------------------------------------------
// Evaluation and norms

cplx eval(const Series& f, std::span<const cplx> y, std::span<const cplx> x, cplx eta, cplx xi);

/// ℓ¹ majorant Σ|c| ρ^{|α|} e^{|k|σ}; throws ErrorKind::domain on η terms.
DecayBound weighted_norm(const Series& f, const WeightedNormParams& params);
double weighted_norm(std::span<const Series> fs, const WeightedNormParams& params);
/// Same majorant with η weighted by 1, for series that carry η linearly.
double majorant(const Series& f, const WeightedNormParams& params);

// ---------------------------------------------------------------------------
// Structure

struct TaylorSplit {
  Series A;
  SeriesVector B;
  SeriesMatrix C;
  Series R;
};

/// f = A + B·y + ½ C y·y + R with R = O(|y|³). Requires e = 0.
TaylorSplit taylor_split(const Series& f);
Series reassemble(const TaylorSplit& split);

/// Terms whose index satisfies pred(space, index).
template <class Pred>
Series select(const Series& f, Pred pred);

Series select_degree(const Series& f, int min_degree, int max_degree);
/// Drops every term with e = 1.
Series drop_eta(const Series& f);
/// Re-expands a series around y = y*: returns g(y) = f(y* + y).
Series shift_actions(const Series& f, std::span<const double> y_star);
/// Σ_i ws[i] y_i as a series (coefficients must be real for a real function).
Series linear_form(SpacePtr space, std::span<const double> weights);

/// c(k,α,e,p) == conj c(-k,α,e,p) up to the relative tolerance.
bool is_real_symmetric(const Series& f, double rel_tol = 1e-12);
/// Largest coefficient difference max |f_c - g_c|.
double max_abs_difference(const Series& f, const Series& g);
/// max |f_c - g_c| / max(max |f_c|, max |g_c|); 0 when both are empty.
double relative_difference(const Series& f, const Series& g);
double max_abs_coefficient(const Series& f);

// ---------------------------------------------------------------------------

class SeriesAccess {
 public:
  static std::vector<Term>& terms(Series& s) { return s.terms_; }
  static double& loss(Series& s) { return s.truncation_loss_; }
};

template <class Pred>
Series select(const Series& f, Pred pred) {
  Series out(f.space_ptr());
  auto& dst = SeriesAccess::terms(out);
  const auto& sp = f.space();
  for (const auto& t : f.terms()) {
    if (pred(sp, t.index)) dst.push_back(t);
  }
  SeriesAccess::loss(out) = f.truncation_loss();
  return out;
}

}  // namespace poisson_kam
