#include "poisson_kam/ftseries.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <mutex>
#include <numeric>
#include <string>
#include <tuple>

#include <fmt/format.h>

namespace poisson_kam {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::structural: return "structural error";
    case ErrorKind::invariant_violation: return "invariant violation";
    case ErrorKind::domain: return "domain error";
    case ErrorKind::resonance: return "resonance";
    case ErrorKind::near_resonance: return "near resonance";
    case ErrorKind::secular_term: return "secular term";
    case ErrorKind::divergence_risk: return "divergence risk";
    case ErrorKind::smallness_violated: return "smallness condition violated";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::stiffness: return "stiffness";
    case ErrorKind::parse: return "parse error";
  }
  return "error";
}

int ModeKey::k_norm() const {
  int s = 0;
  for (int v : k) s += std::abs(v);
  return s;
}

int ModeKey::degree() const { return std::accumulate(alpha.begin(), alpha.end(), 0); }

// ---------------------------------------------------------------------------
// SeriesSpace

namespace {

constexpr std::size_t kMaxBox = std::size_t{1} << 26;
constexpr std::size_t kMaxAddTable = std::size_t{1} << 22;

std::size_t ipow(std::size_t base, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) {
    if (r > kMaxBox) return kMaxBox + 1;
    r *= base;
  }
  return r;
}

// Product lookup tables, built once per space and shared by every mul.
struct AddTables {
  std::vector<std::int32_t> k_sum;      // k_count²; empty if too large
  std::vector<std::int32_t> alpha_sum;  // alpha_count²; empty if too large
};

std::mutex& registry_mutex() {
  static std::mutex mu;
  return mu;
}

using SpaceKey = std::tuple<int, int, double, int, int, int, double>;

std::map<SpaceKey, SpacePtr>& registry() {
  static std::map<SpaceKey, SpacePtr> r;
  return r;
}

std::map<const SeriesSpace*, std::shared_ptr<AddTables>>& add_tables_registry() {
  static std::map<const SeriesSpace*, std::shared_ptr<AddTables>> r;
  return r;
}

}  // namespace

SeriesSpace::SeriesSpace(int n, int m, double a, Truncation trunc, double drop_tolerance)
    : n_(n), m_(m), a_(a), trunc_(trunc), drop_tolerance_(drop_tolerance) {
  if (n < 1 || n > kMaxDims || m < 1 || m > kMaxDims) {
    throw Error(ErrorKind::structural,
                fmt::format("dimensions n={}, m={} outside [1, {}]", n, m, kMaxDims));
  }
  if (trunc.k_max < 0 || trunc.l_max < 0 || trunc.p_max < 0 || trunc.k_max > 120 ||
      trunc.l_max > 250) {
    throw Error(ErrorKind::structural,
                fmt::format("invalid truncation K_max={}, L_max={}, P_max={}", trunc.k_max,
                            trunc.l_max, trunc.p_max));
  }
  if (!(a >= 0.0) || !std::isfinite(a)) {
    throw Error(ErrorKind::structural, "decay rate must be finite and non-negative");
  }

  const int K = trunc.k_max;
  const std::size_t kbase = static_cast<std::size_t>(2 * K + 1);
  const std::size_t kbox = ipow(kbase, n);
  const std::size_t abase = static_cast<std::size_t>(trunc.l_max + 1);
  const std::size_t abox = ipow(abase, m);
  if (kbox > kMaxBox || abox > kMaxBox) {
    throw Error(ErrorKind::structural, "truncation box too large for dense mode indexing");
  }

  k_box_to_rank_.assign(kbox, -1);
  std::vector<int> digits(static_cast<std::size_t>(n));
  for (std::size_t box = 0; box < kbox; ++box) {
    std::size_t rem = box;
    int norm = 0;
    for (int l = 0; l < n; ++l) {
      digits[static_cast<std::size_t>(l)] = static_cast<int>(rem % kbase) - K;
      rem /= kbase;
      norm += std::abs(digits[static_cast<std::size_t>(l)]);
    }
    if (norm > K) continue;
    k_box_to_rank_[box] = static_cast<std::int32_t>(k_norm_.size());
    for (int l = 0; l < kMaxDims; ++l) {
      k_table_.push_back(l < n ? static_cast<std::int8_t>(digits[static_cast<std::size_t>(l)]) : 0);
    }
    k_norm_.push_back(norm);
  }

  alpha_box_to_rank_.assign(abox, -1);
  digits.assign(static_cast<std::size_t>(m), 0);
  for (std::size_t box = 0; box < abox; ++box) {
    std::size_t rem = box;
    int deg = 0;
    for (int i = 0; i < m; ++i) {
      digits[static_cast<std::size_t>(i)] = static_cast<int>(rem % abase);
      rem /= abase;
      deg += digits[static_cast<std::size_t>(i)];
    }
    if (deg > trunc.l_max) continue;
    alpha_box_to_rank_[box] = static_cast<std::int32_t>(degree_.size());
    for (int i = 0; i < kMaxDims; ++i) {
      alpha_table_.push_back(i < m ? static_cast<std::uint8_t>(digits[static_cast<std::size_t>(i)]) : 0);
    }
    degree_.push_back(deg);
  }
  alpha_count_ = degree_.size();

  const double total = static_cast<double>(k_norm_.size()) * static_cast<double>(alpha_count_) * 2.0 *
                       static_cast<double>(trunc.p_max + 1);
  if (total > 4.0e9) {
    throw Error(ErrorKind::structural, "truncation produces more modes than the index supports");
  }
  size_ = static_cast<std::size_t>(total);
}

SpacePtr SeriesSpace::make(int n, int m, double a, Truncation trunc, double drop_tolerance) {
  std::lock_guard lock(registry_mutex());
  SpaceKey key{n, m, a, trunc.k_max, trunc.l_max, trunc.p_max, drop_tolerance};
  auto& reg = registry();
  auto it = reg.find(key);
  if (it != reg.end()) return it->second;
  auto sp = std::make_shared<const SeriesSpace>(n, m, a, trunc, drop_tolerance);
  reg.emplace(key, sp);
  return sp;
}

bool SeriesSpace::same_as(const SeriesSpace& o) const {
  return this == &o || (n_ == o.n_ && m_ == o.m_ && a_ == o.a_ && trunc_ == o.trunc_ &&
                        drop_tolerance_ == o.drop_tolerance_);
}

std::int32_t SeriesSpace::k_rank(const int* k) const {
  const int K = trunc_.k_max;
  const std::size_t kbase = static_cast<std::size_t>(2 * K + 1);
  std::size_t box = 0;
  std::size_t mult = 1;
  int norm = 0;
  for (int l = 0; l < n_; ++l) {
    norm += std::abs(k[l]);
    if (norm > K) return -1;
    box += static_cast<std::size_t>(k[l] + K) * mult;
    mult *= kbase;
  }
  return k_box_to_rank_[box];
}

std::int32_t SeriesSpace::alpha_rank(const int* alpha) const {
  const std::size_t abase = static_cast<std::size_t>(trunc_.l_max + 1);
  std::size_t box = 0;
  std::size_t mult = 1;
  int deg = 0;
  for (int i = 0; i < m_; ++i) {
    if (alpha[i] < 0) return -1;
    deg += alpha[i];
    if (deg > trunc_.l_max) return -1;
    box += static_cast<std::size_t>(alpha[i]) * mult;
    mult *= abase;
  }
  return alpha_box_to_rank_[box];
}

bool SeriesSpace::contains(const ModeKey& key) const {
  if (static_cast<int>(key.k.size()) != n_ || static_cast<int>(key.alpha.size()) != m_) return false;
  if (key.e < 0 || key.e > 1 || key.p < 0 || key.p > trunc_.p_max) return false;
  return k_rank(key.k.data()) >= 0 && alpha_rank(key.alpha.data()) >= 0;
}

std::uint32_t SeriesSpace::index(const ModeKey& key) const {
  if (static_cast<int>(key.k.size()) != n_ || static_cast<int>(key.alpha.size()) != m_) {
    throw Error(ErrorKind::structural,
                fmt::format("mode key has shape ({}, {}), space expects ({}, {})", key.k.size(),
                            key.alpha.size(), n_, m_));
  }
  if (key.e < 0 || key.e > 1) throw Error(ErrorKind::invariant_violation, "η-degree must be 0 or 1");
  const auto kr = k_rank(key.k.data());
  const auto ar = alpha_rank(key.alpha.data());
  if (kr < 0 || ar < 0 || key.p < 0 || key.p > trunc_.p_max) {
    throw Error(ErrorKind::structural, "mode key outside the truncation");
  }
  return compose(static_cast<std::uint32_t>(kr), static_cast<std::uint32_t>(ar), key.e, key.p);
}

ModeKey SeriesSpace::key(std::uint32_t idx) const {
  ModeKey key;
  const auto kr = k_rank_of(idx);
  const auto ar = alpha_rank_of(idx);
  const auto* k = k_of_rank(kr);
  const auto* al = alpha_of_rank(ar);
  key.k.assign(k, k + n_);
  key.alpha.assign(al, al + m_);
  key.e = e_of(idx);
  key.p = p_of(idx);
  return key;
}

namespace {

const AddTables& add_tables(const SeriesSpace& sp) {
  std::lock_guard lock(registry_mutex());
  auto& reg = add_tables_registry();
  auto it = reg.find(&sp);
  if (it != reg.end()) return *it->second;

  auto tables = std::make_shared<AddTables>();
  const std::size_t kc = sp.k_count();
  if (kc * kc <= kMaxAddTable) {
    tables->k_sum.resize(kc * kc);
    int buf[kMaxDims];
    for (std::uint32_t r1 = 0; r1 < kc; ++r1) {
      const auto* k1 = sp.k_of_rank(r1);
      for (std::uint32_t r2 = 0; r2 < kc; ++r2) {
        const auto* k2 = sp.k_of_rank(r2);
        for (int l = 0; l < sp.n(); ++l) buf[l] = k1[l] + k2[l];
        tables->k_sum[r1 * kc + r2] = sp.k_rank(buf);
      }
    }
  }
  const std::size_t ac = sp.alpha_count();
  if (ac * ac <= kMaxAddTable) {
    tables->alpha_sum.resize(ac * ac);
    int buf[kMaxDims];
    for (std::uint32_t r1 = 0; r1 < ac; ++r1) {
      const auto* a1 = sp.alpha_of_rank(r1);
      for (std::uint32_t r2 = 0; r2 < ac; ++r2) {
        const auto* a2 = sp.alpha_of_rank(r2);
        for (int i = 0; i < sp.m(); ++i) buf[i] = a1[i] + a2[i];
        tables->alpha_sum[r1 * ac + r2] = sp.alpha_rank(buf);
      }
    }
  }
  auto [pos, ok] = reg.emplace(&sp, std::move(tables));
  return *pos->second;
}

std::int32_t k_sum_rank(const SeriesSpace& sp, const AddTables& t, std::uint32_t r1, std::uint32_t r2) {
  if (!t.k_sum.empty()) return t.k_sum[r1 * sp.k_count() + r2];
  int buf[kMaxDims];
  const auto* k1 = sp.k_of_rank(r1);
  const auto* k2 = sp.k_of_rank(r2);
  for (int l = 0; l < sp.n(); ++l) buf[l] = k1[l] + k2[l];
  return sp.k_rank(buf);
}

std::int32_t alpha_sum_rank(const SeriesSpace& sp, const AddTables& t, std::uint32_t r1,
                            std::uint32_t r2) {
  if (!t.alpha_sum.empty()) return t.alpha_sum[r1 * sp.alpha_count() + r2];
  int buf[kMaxDims];
  const auto* a1 = sp.alpha_of_rank(r1);
  const auto* a2 = sp.alpha_of_rank(r2);
  for (int i = 0; i < sp.m(); ++i) buf[i] = a1[i] + a2[i];
  return sp.alpha_rank(buf);
}

// Sparse accumulator over the dense mode index, one per thread.
class Accumulator {
 public:
  void reset(std::size_t size) {
    if (acc_.size() < size) {
      acc_.assign(size, cplx{});
      mark_.assign(size, 0);
    }
    touched_.clear();
  }

  void add(std::uint32_t idx, cplx c) {
    if (!mark_[idx]) {
      mark_[idx] = 1;
      touched_.push_back(idx);
      acc_[idx] = c;  // assignment keeps the sign of a lone -0.0
      return;
    }
    acc_[idx] += c;
  }

  // Moves the accumulated values into `out` in index order and clears.
  void drain(std::vector<Term>& out) {
    std::sort(touched_.begin(), touched_.end());
    out.clear();
    out.reserve(touched_.size());
    for (auto idx : touched_) {
      out.push_back({idx, acc_[idx]});
      acc_[idx] = cplx{};
      mark_[idx] = 0;
    }
    touched_.clear();
  }

 private:
  std::vector<cplx> acc_;
  std::vector<std::uint8_t> mark_;
  std::vector<std::uint32_t> touched_;
};

Accumulator& thread_accumulator() {
  thread_local Accumulator acc;
  return acc;
}

void require_same_space(const Series& f, const Series& g, const char* op) {
  if (!f.space().same_as(g.space())) {
    throw Error(ErrorKind::structural, fmt::format("{}: operands have different dimensions, decay "
                                                   "rate or truncation",
                                                   op));
  }
}

// Drops exact zeros and coefficients below drop_tolerance × (largest
// magnitude among the terms with the same decay index p).
void canonicalize(const SeriesSpace& sp, std::vector<Term>& terms) {
  const double tol = sp.drop_tolerance();
  if (tol > 0.0) {
    std::vector<double> level_max(static_cast<std::size_t>(sp.truncation().p_max + 1), 0.0);
    for (const auto& t : terms) {
      auto& lm = level_max[static_cast<std::size_t>(sp.p_of(t.index))];
      lm = std::max(lm, std::abs(t.c));
    }
    std::erase_if(terms, [&](const Term& t) {
      const double mag = std::abs(t.c);
      return mag == 0.0 || mag < tol * level_max[static_cast<std::size_t>(sp.p_of(t.index))];
    });
  } else {
    std::erase_if(terms, [](const Term& t) { return t.c == cplx{}; });
  }
}

// Orders mul operands so that mul(f,g) and mul(g,f) run the identical loop.
bool operands_swapped(const Series& f, const Series& g) {
  if (f.size() != g.size()) return f.size() > g.size();
  const auto ft = f.terms();
  const auto gt = g.terms();
  for (std::size_t i = 0; i < ft.size(); ++i) {
    if (ft[i].index != gt[i].index) return ft[i].index > gt[i].index;
    if (ft[i].c.real() != gt[i].c.real()) return ft[i].c.real() > gt[i].c.real();
    if (ft[i].c.imag() != gt[i].c.imag()) return ft[i].c.imag() > gt[i].c.imag();
  }
  return false;
}

struct Decoded {
  std::uint32_t k_rank;
  std::uint32_t alpha_rank;
  int e;
  int p;
  cplx c;
};

std::vector<Decoded> decode(const Series& f) {
  const auto& sp = f.space();
  std::vector<Decoded> out;
  out.reserve(f.size());
  for (const auto& t : f.terms()) {
    out.push_back({sp.k_rank_of(t.index), sp.alpha_rank_of(t.index), sp.e_of(t.index),
                   sp.p_of(t.index), t.c});
  }
  return out;
}

// Accumulates f·g into acc; returns the discarded magnitude.
double accumulate_product(const Series& f, const Series& g, Accumulator& acc) {
  const auto& sp = f.space();
  const auto& tables = add_tables(sp);
  const int p_max = sp.truncation().p_max;
  const Series& outer = operands_swapped(f, g) ? g : f;
  const Series& inner = operands_swapped(f, g) ? f : g;
  const auto a = decode(outer);
  const auto b = decode(inner);
  double lost = 0.0;
  for (const auto& u : a) {
    for (const auto& v : b) {
      const int e = u.e + v.e;
      if (e > 1) {
        throw Error(ErrorKind::invariant_violation,
                    "product would contain η² (η enters the scheme at most linearly)");
      }
      const int p = u.p + v.p;
      const auto kr = k_sum_rank(sp, tables, u.k_rank, v.k_rank);
      const auto ar = alpha_sum_rank(sp, tables, u.alpha_rank, v.alpha_rank);
      const cplx c = u.c * v.c;
      if (p > p_max || kr < 0 || ar < 0) {
        lost += std::abs(c);
        continue;
      }
      acc.add(sp.compose(static_cast<std::uint32_t>(kr), static_cast<std::uint32_t>(ar), e, p), c);
    }
  }
  return lost;
}

Series make_series(const SpacePtr& space, std::vector<Term> terms, double loss) {
  Series out(space);
  canonicalize(*space, terms);
  SeriesAccess::terms(out) = std::move(terms);
  SeriesAccess::loss(out) = loss;
  return out;
}

// Applies an index/coefficient map term by term; `fn` returns false to drop.
template <class Fn>
Series remap(const Series& f, Fn fn) {
  std::vector<Term> out;
  out.reserve(f.size());
  for (const auto& t : f.terms()) {
    Term r = t;
    if (fn(r)) out.push_back(r);
  }
  std::sort(out.begin(), out.end(), [](const Term& a, const Term& b) { return a.index < b.index; });
  return make_series(f.space_ptr(), std::move(out), f.truncation_loss());
}

}  // namespace

// ---------------------------------------------------------------------------
// Series

Series::Series(SpacePtr space) : space_(std::move(space)) {
  if (!space_) throw Error(ErrorKind::structural, "series needs a space");
}

Series Series::constant(SpacePtr space, cplx value) {
  ModeKey key{std::vector<int>(static_cast<std::size_t>(space->n()), 0),
              std::vector<int>(static_cast<std::size_t>(space->m()), 0), 0, 0};
  return monomial(std::move(space), key, value);
}

Series Series::monomial(SpacePtr space, const ModeKey& key, cplx value) {
  Series out(space);
  if (value != cplx{}) SeriesAccess::terms(out).push_back({space->index(key), value});
  return out;
}

Series Series::action(SpacePtr space, int i) {
  ModeKey key{std::vector<int>(static_cast<std::size_t>(space->n()), 0),
              std::vector<int>(static_cast<std::size_t>(space->m()), 0), 0, 0};
  key.alpha.at(static_cast<std::size_t>(i)) = 1;
  return monomial(std::move(space), key, 1.0);
}

Series Series::eta(SpacePtr space) {
  ModeKey key{std::vector<int>(static_cast<std::size_t>(space->n()), 0),
              std::vector<int>(static_cast<std::size_t>(space->m()), 0), 1, 0};
  return monomial(std::move(space), key, 1.0);
}

Series Series::from_terms(SpacePtr space, const std::vector<std::pair<ModeKey, cplx>>& terms) {
  auto& acc = thread_accumulator();
  acc.reset(space->size());
  for (const auto& [key, c] : terms) acc.add(space->index(key), c);
  std::vector<Term> out;
  acc.drain(out);
  return make_series(space, std::move(out), 0.0);
}

cplx Series::coefficient(const ModeKey& key) const {
  if (!space_->contains(key)) return {};
  const auto idx = space_->index(key);
  auto it = std::lower_bound(terms_.begin(), terms_.end(), idx,
                             [](const Term& t, std::uint32_t v) { return t.index < v; });
  if (it != terms_.end() && it->index == idx) return it->c;
  return {};
}

int Series::max_e() const {
  int e = 0;
  for (const auto& t : terms_) e = std::max(e, space_->e_of(t.index));
  return e;
}

int Series::min_p() const {
  if (terms_.empty()) return 0;
  int p = space_->truncation().p_max;
  for (const auto& t : terms_) p = std::min(p, space_->p_of(t.index));
  return p;
}

bool operator==(const Series& a, const Series& b) {
  if (!a.space().same_as(b.space()) || a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.terms_[i].index != b.terms_[i].index || a.terms_[i].c != b.terms_[i].c) return false;
  }
  return true;
}

SeriesMatrix::SeriesMatrix(SpacePtr space, int r, int c)
    : rows(r), cols(c), entries(static_cast<std::size_t>(r * c), Series(space)) {}

// ---------------------------------------------------------------------------
// Algebra

namespace {

template <class Combine>
Series merge(const Series& f, const Series& g, Combine combine) {
  std::vector<Term> out;
  out.reserve(f.size() + g.size());
  const auto a = f.terms();
  const auto b = g.terms();
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a[i].index < b[j].index)) {
      out.push_back({a[i].index, combine(a[i].c, cplx{})});
      ++i;
    } else if (i == a.size() || b[j].index < a[i].index) {
      out.push_back({b[j].index, combine(cplx{}, b[j].c)});
      ++j;
    } else {
      out.push_back({a[i].index, combine(a[i].c, b[j].c)});
      ++i;
      ++j;
    }
  }
  return make_series(f.space_ptr(), std::move(out), f.truncation_loss() + g.truncation_loss());
}

}  // namespace

Series add(const Series& f, const Series& g) {
  require_same_space(f, g, "add");
  return merge(f, g, [](cplx u, cplx v) { return u + v; });
}

Series sub(const Series& f, const Series& g) {
  require_same_space(f, g, "sub");
  return merge(f, g, [](cplx u, cplx v) { return u - v; });
}

Series neg(const Series& f) {
  Series out = f;
  for (auto& t : SeriesAccess::terms(out)) t.c = -t.c;
  return out;
}

Series scale(const Series& f, cplx factor) {
  std::vector<Term> out(f.terms().begin(), f.terms().end());
  for (auto& t : out) t.c *= factor;
  return make_series(f.space_ptr(), std::move(out), f.truncation_loss() * std::abs(factor));
}

Series mul(const Series& f, const Series& g) {
  require_same_space(f, g, "mul");
  auto& acc = thread_accumulator();
  acc.reset(f.space().size());
  const double lost = accumulate_product(f, g, acc);
  std::vector<Term> out;
  acc.drain(out);
  return make_series(f.space_ptr(), std::move(out),
                     f.truncation_loss() + g.truncation_loss() + lost);
}

Series dot(std::span<const Series> fs, std::span<const Series> gs) {
  if (fs.size() != gs.size() || fs.empty()) {
    throw Error(ErrorKind::structural, "dot: operand lists must be non-empty and of equal length");
  }
  auto& acc = thread_accumulator();
  acc.reset(fs[0].space().size());
  double lost = 0.0;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    require_same_space(fs[0], fs[i], "dot");
    require_same_space(fs[0], gs[i], "dot");
    lost += fs[i].truncation_loss() + gs[i].truncation_loss();
    lost += accumulate_product(fs[i], gs[i], acc);
  }
  std::vector<Term> out;
  acc.drain(out);
  return make_series(fs[0].space_ptr(), std::move(out), lost);
}

Series partial_x(const Series& f, int l) {
  const auto& sp = f.space();
  if (l < 0 || l >= sp.n()) throw Error(ErrorKind::structural, "partial_x: angle index out of range");
  return remap(f, [&](Term& t) {
    const int kl = sp.k_of_rank(sp.k_rank_of(t.index))[l];
    if (kl == 0) return false;
    t.c *= cplx(0.0, static_cast<double>(kl));
    return true;
  });
}

Series partial_y(const Series& f, int i) {
  const auto& sp = f.space();
  if (i < 0 || i >= sp.m()) throw Error(ErrorKind::structural, "partial_y: action index out of range");
  int buf[kMaxDims];
  return remap(f, [&](Term& t) {
    const auto ar = sp.alpha_rank_of(t.index);
    const auto* al = sp.alpha_of_rank(ar);
    if (al[i] == 0) return false;
    for (int j = 0; j < sp.m(); ++j) buf[j] = al[j];
    const double factor = static_cast<double>(buf[i]);
    buf[i] -= 1;
    const auto nr = sp.alpha_rank(buf);
    t.index = sp.compose(sp.k_rank_of(t.index), static_cast<std::uint32_t>(nr), sp.e_of(t.index),
                         sp.p_of(t.index));
    t.c *= factor;
    return true;
  });
}

Series partial_eta(const Series& f) {
  const auto& sp = f.space();
  return remap(f, [&](Term& t) {
    if (sp.e_of(t.index) == 0) return false;
    t.index = sp.compose(sp.k_rank_of(t.index), sp.alpha_rank_of(t.index), 0, sp.p_of(t.index));
    return true;
  });
}

Series partial_xi(const Series& f) {
  const auto& sp = f.space();
  const double a = sp.decay_rate();
  return remap(f, [&](Term& t) {
    const int p = sp.p_of(t.index);
    if (p == 0) return false;
    t.c *= -static_cast<double>(p) * a;
    return true;
  });
}

// ---------------------------------------------------------------------------
// Evaluation and norms

cplx eval(const Series& f, std::span<const cplx> y, std::span<const cplx> x, cplx eta, cplx xi) {
  const auto& sp = f.space();
  const int n = sp.n();
  const int m = sp.m();
  if (static_cast<int>(y.size()) != m || static_cast<int>(x.size()) != n) {
    throw Error(ErrorKind::structural, "eval: point has the wrong dimensions");
  }
  const auto& tr = sp.truncation();
  const int K = tr.k_max;
  // Tables e^{i j x_l}, y_i^j, e^{-p a ξ}.
  std::vector<cplx> fourier(static_cast<std::size_t>(n * (2 * K + 1)));
  for (int l = 0; l < n; ++l) {
    for (int j = -K; j <= K; ++j) {
      fourier[static_cast<std::size_t>(l * (2 * K + 1) + j + K)] =
          std::exp(cplx(0.0, 1.0) * static_cast<double>(j) * x[static_cast<std::size_t>(l)]);
    }
  }
  std::vector<cplx> powers(static_cast<std::size_t>(m * (tr.l_max + 1)));
  for (int i = 0; i < m; ++i) {
    cplx v = 1.0;
    for (int j = 0; j <= tr.l_max; ++j) {
      powers[static_cast<std::size_t>(i * (tr.l_max + 1) + j)] = v;
      v *= y[static_cast<std::size_t>(i)];
    }
  }
  std::vector<cplx> decay(static_cast<std::size_t>(tr.p_max + 1));
  for (int p = 0; p <= tr.p_max; ++p) {
    decay[static_cast<std::size_t>(p)] = std::exp(-static_cast<double>(p) * sp.decay_rate() * xi);
  }

  cplx sum = 0.0;
  for (const auto& t : f.terms()) {
    const auto* k = sp.k_of_rank(sp.k_rank_of(t.index));
    const auto* al = sp.alpha_of_rank(sp.alpha_rank_of(t.index));
    cplx v = t.c;
    for (int l = 0; l < n; ++l) v *= fourier[static_cast<std::size_t>(l * (2 * K + 1) + k[l] + K)];
    for (int i = 0; i < m; ++i) v *= powers[static_cast<std::size_t>(i * (tr.l_max + 1) + al[i])];
    if (sp.e_of(t.index) == 1) v *= eta;
    v *= decay[static_cast<std::size_t>(sp.p_of(t.index))];
    sum += v;
  }
  return sum;
}

DecayBound weighted_norm(const Series& f, const WeightedNormParams& params) {
  if (!(params.rho > 0.0) || !(params.sigma > 0.0)) {
    throw Error(ErrorKind::domain, "weighted_norm: rho and sigma must be positive");
  }
  const auto& sp = f.space();
  DecayBound out;
  out.p = f.empty() ? 0 : sp.truncation().p_max;
  for (const auto& t : f.terms()) {
    if (sp.e_of(t.index) != 0) {
      throw Error(ErrorKind::domain, "weighted_norm: series depends on η");
    }
    const auto kr = sp.k_rank_of(t.index);
    const auto ar = sp.alpha_rank_of(t.index);
    out.K += std::abs(t.c) * std::pow(params.rho, sp.degree_of_rank(ar)) *
             std::exp(static_cast<double>(sp.k_norm_of_rank(kr)) * params.sigma);
    out.p = std::min(out.p, sp.p_of(t.index));
  }
  return out;
}

double majorant(const Series& f, const WeightedNormParams& params) {
  const auto& sp = f.space();
  double K = 0.0;
  for (const auto& t : f.terms()) {
    K += std::abs(t.c) * std::pow(params.rho, sp.degree_of_rank(sp.alpha_rank_of(t.index))) *
         std::exp(static_cast<double>(sp.k_norm_of_rank(sp.k_rank_of(t.index))) * params.sigma);
  }
  return K;
}

double weighted_norm(std::span<const Series> fs, const WeightedNormParams& params) {
  double s = 0.0;
  for (const auto& f : fs) s += weighted_norm(f, params).K;
  return s;
}

// ---------------------------------------------------------------------------
// Structure

namespace {

// Index of the same term with the action multi-index replaced; -1 if outside.
std::int64_t with_alpha(const SeriesSpace& sp, std::uint32_t idx, const int* alpha) {
  const auto ar = sp.alpha_rank(alpha);
  if (ar < 0) return -1;
  return sp.compose(sp.k_rank_of(idx), static_cast<std::uint32_t>(ar), sp.e_of(idx), sp.p_of(idx));
}

void push_sorted(Series& s, std::vector<Term> terms) {
  std::sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) { return a.index < b.index; });
  SeriesAccess::terms(s) = std::move(terms);
}

}  // namespace

TaylorSplit taylor_split(const Series& f) {
  const auto& sp = f.space();
  if (f.max_e() != 0) throw Error(ErrorKind::domain, "taylor_split: series depends on η");
  const int m = sp.m();
  const auto space = f.space_ptr();

  TaylorSplit out{Series(space), SeriesVector(static_cast<std::size_t>(m), Series(space)),
                  SeriesMatrix(space, m, m), Series(space)};
  std::vector<Term> a_terms, r_terms;
  std::vector<std::vector<Term>> b_terms(static_cast<std::size_t>(m));
  std::vector<std::vector<Term>> c_terms(static_cast<std::size_t>(m * m));
  int zero[kMaxDims] = {};

  for (const auto& t : f.terms()) {
    const auto* al = sp.alpha_of_rank(sp.alpha_rank_of(t.index));
    const int deg = sp.degree_of_rank(sp.alpha_rank_of(t.index));
    if (deg == 0) {
      a_terms.push_back(t);
    } else if (deg >= 3) {
      r_terms.push_back(t);
    } else {
      const auto base = static_cast<std::uint32_t>(with_alpha(sp, t.index, zero));
      if (deg == 1) {
        int i = 0;
        while (al[i] == 0) ++i;
        b_terms[static_cast<std::size_t>(i)].push_back({base, t.c});
      } else {
        int i = 0;
        while (al[i] == 0) ++i;
        if (al[i] == 2) {
          c_terms[static_cast<std::size_t>(i * m + i)].push_back({base, 2.0 * t.c});
        } else {
          int l = i + 1;
          while (al[l] == 0) ++l;
          c_terms[static_cast<std::size_t>(i * m + l)].push_back({base, t.c});
          c_terms[static_cast<std::size_t>(l * m + i)].push_back({base, t.c});
        }
      }
    }
  }
  SeriesAccess::terms(out.A) = std::move(a_terms);
  SeriesAccess::terms(out.R) = std::move(r_terms);
  for (int i = 0; i < m; ++i) push_sorted(out.B[static_cast<std::size_t>(i)], std::move(b_terms[static_cast<std::size_t>(i)]));
  for (int i = 0; i < m * m; ++i) push_sorted(out.C.entries[static_cast<std::size_t>(i)], std::move(c_terms[static_cast<std::size_t>(i)]));
  SeriesAccess::loss(out.A) = f.truncation_loss();
  return out;
}

Series reassemble(const TaylorSplit& split) {
  const auto& sp = split.A.space();
  const int m = sp.m();
  std::vector<Term> terms(split.A.terms().begin(), split.A.terms().end());
  terms.insert(terms.end(), split.R.terms().begin(), split.R.terms().end());
  double lost = split.A.truncation_loss() + split.R.truncation_loss();
  int alpha[kMaxDims] = {};

  auto raise = [&](const Series& s, int i, int l, cplx factor) {
    for (const auto& t : s.terms()) {
      const auto* al = sp.alpha_of_rank(sp.alpha_rank_of(t.index));
      for (int j = 0; j < m; ++j) alpha[j] = al[j];
      alpha[i] += 1;
      if (l >= 0) alpha[l] += 1;
      const auto idx = with_alpha(sp, t.index, alpha);
      if (idx < 0) {
        lost += std::abs(t.c * factor);
        continue;
      }
      terms.push_back({static_cast<std::uint32_t>(idx), t.c * factor});
    }
  };
  for (int i = 0; i < m; ++i) raise(split.B[static_cast<std::size_t>(i)], i, -1, 1.0);
  for (int i = 0; i < m; ++i) {
    for (int l = i; l < m; ++l) {
      if (i == l) {
        raise(split.C.at(i, i), i, i, 0.5);
      } else {
        const Series sym = add(split.C.at(i, l), split.C.at(l, i));
        raise(sym, i, l, 0.5);
      }
    }
  }
  auto& acc = thread_accumulator();
  acc.reset(sp.size());
  for (const auto& t : terms) acc.add(t.index, t.c);
  std::vector<Term> out;
  acc.drain(out);
  return make_series(split.A.space_ptr(), std::move(out), lost);
}

Series select_degree(const Series& f, int min_degree, int max_degree) {
  return select(f, [&](const SeriesSpace& sp, std::uint32_t idx) {
    const int d = sp.degree_of_rank(sp.alpha_rank_of(idx));
    return d >= min_degree && d <= max_degree;
  });
}

Series drop_eta(const Series& f) {
  return select(f, [](const SeriesSpace& sp, std::uint32_t idx) { return sp.e_of(idx) == 0; });
}

Series shift_actions(const Series& f, std::span<const double> y_star) {
  const auto& sp = f.space();
  const int m = sp.m();
  if (static_cast<int>(y_star.size()) != m) {
    throw Error(ErrorKind::structural, "shift_actions: expansion point has the wrong dimension");
  }
  auto& acc = thread_accumulator();
  acc.reset(sp.size());
  int beta[kMaxDims];
  int alpha[kMaxDims];
  for (const auto& t : f.terms()) {
    const auto* al = sp.alpha_of_rank(sp.alpha_rank_of(t.index));
    for (int i = 0; i < m; ++i) {
      alpha[i] = al[i];
      beta[i] = 0;
    }
    // Enumerate every β ≤ α in odometer order.
    while (true) {
      double c = 1.0;
      for (int i = 0; i < m; ++i) {
        // binomial(α_i, β_i) y*_i^{α_i-β_i}
        double binom = 1.0;
        for (int j = 1; j <= beta[i]; ++j) binom = binom * (alpha[i] - beta[i] + j) / j;
        c *= binom * std::pow(y_star[static_cast<std::size_t>(i)], alpha[i] - beta[i]);
      }
      if (c != 0.0) {
        const auto idx = with_alpha(sp, t.index, beta);
        acc.add(static_cast<std::uint32_t>(idx), t.c * c);
      }
      int i = 0;
      while (i < m && beta[i] == alpha[i]) {
        beta[i] = 0;
        ++i;
      }
      if (i == m) break;
      ++beta[i];
    }
  }
  std::vector<Term> out;
  acc.drain(out);
  return make_series(f.space_ptr(), std::move(out), f.truncation_loss());
}

Series linear_form(SpacePtr space, std::span<const double> weights) {
  if (static_cast<int>(weights.size()) != space->m()) {
    throw Error(ErrorKind::structural, "linear_form: weight vector has the wrong dimension");
  }
  std::vector<std::pair<ModeKey, cplx>> terms;
  for (int i = 0; i < space->m(); ++i) {
    ModeKey key{std::vector<int>(static_cast<std::size_t>(space->n()), 0),
                std::vector<int>(static_cast<std::size_t>(space->m()), 0), 0, 0};
    key.alpha[static_cast<std::size_t>(i)] = 1;
    terms.emplace_back(key, weights[static_cast<std::size_t>(i)]);
  }
  return Series::from_terms(std::move(space), terms);
}

double max_abs_coefficient(const Series& f) {
  double mx = 0.0;
  for (const auto& t : f.terms()) mx = std::max(mx, std::abs(t.c));
  return mx;
}

bool is_real_symmetric(const Series& f, double rel_tol) {
  const auto& sp = f.space();
  const double scale_ref = max_abs_coefficient(f);
  if (scale_ref == 0.0) return true;
  int buf[kMaxDims];
  for (const auto& t : f.terms()) {
    const auto* k = sp.k_of_rank(sp.k_rank_of(t.index));
    for (int l = 0; l < sp.n(); ++l) buf[l] = -k[l];
    const auto mr = sp.k_rank(buf);
    const auto idx = sp.compose(static_cast<std::uint32_t>(mr), sp.alpha_rank_of(t.index),
                                sp.e_of(t.index), sp.p_of(t.index));
    auto it = std::lower_bound(f.terms().begin(), f.terms().end(), idx,
                               [](const Term& a, std::uint32_t v) { return a.index < v; });
    const cplx mirror = (it != f.terms().end() && it->index == idx) ? it->c : cplx{};
    if (std::abs(t.c - std::conj(mirror)) > rel_tol * scale_ref) return false;
  }
  return true;
}

double max_abs_difference(const Series& f, const Series& g) {
  const Series d = merge(f, g, [](cplx u, cplx v) { return u - v; });
  return max_abs_coefficient(d);
}

double relative_difference(const Series& f, const Series& g) {
  const double ref = std::max(max_abs_coefficient(f), max_abs_coefficient(g));
  if (ref == 0.0) return 0.0;
  return max_abs_difference(f, g) / ref;
}

}  // namespace poisson_kam
