#include "poisson_kam/io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace poisson_kam::io {

namespace {

using json = nlohmann::json;
using ordered = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Writing

ordered num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

ordered num_vector(const std::vector<double>& v) {
  ordered a = ordered::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

ordered terms_json(const Series& f) {
  ordered terms = ordered::array();
  for (const auto& t : f.terms()) {
    const ModeKey key = f.key(t);
    ordered row;
    row["k"] = key.k;
    row["alpha"] = key.alpha;
    row["e"] = key.e;
    row["p"] = key.p;
    row["re"] = num(t.c.real());
    row["im"] = num(t.c.imag());
    terms.push_back(std::move(row));
  }
  return ordered{{"terms", std::move(terms)}};
}

void put_header(ordered& j, const SeriesSpace& sp) {
  j["n"] = sp.n();
  j["m"] = sp.m();
  j["a"] = num(sp.decay_rate());
  j["K_max"] = sp.truncation().k_max;
  j["L_max"] = sp.truncation().l_max;
  j["P_max"] = sp.truncation().p_max;
}

ordered matrix_json(const SeriesMatrix& M) {
  ordered rows = ordered::array();
  for (int i = 0; i < M.rows; ++i) {
    ordered row = ordered::array();
    for (int j = 0; j < M.cols; ++j) row.push_back(terms_json(M.at(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

ordered params_json(const IterationParams& u) {
  return ordered{{"d", num(u.d)},         {"eps", num(u.eps)},         {"zeta", num(u.zeta)},
                 {"upsilon", num(u.upsilon)}, {"rho", num(u.rho)},     {"sigma", num(u.sigma)},
                 {"a", num(u.a)},         {"tau", num(u.tau)},         {"gamma", num(u.gamma)}};
}

ordered constants_json(const ConstantsLedger& c) {
  return ordered{{"theta1", num(c.theta1)},
                 {"theta2", num(c.theta2)},
                 {"rho_star", num(c.rho_star)},
                 {"sigma_star", num(c.sigma_star)},
                 {"omega_norm", num(c.omega_norm)},
                 {"B0_norm", num(c.B0_norm)},
                 {"B1_omega_norm", num(c.B1_omega_norm)},
                 {"M_B", num(c.M_B)},
                 {"M_h", num(c.M_h)},
                 {"M_f", num(c.M_f)},
                 {"M_h_tilde", num(c.M_h_tilde)},
                 {"Gamma", num(c.Gamma)},
                 {"M0", num(c.M0)},
                 {"M1", num(c.M1)},
                 {"M2", num(c.M2)},
                 {"M3", num(c.M3)},
                 {"M4", num(c.M4)},
                 {"M5", num(c.M5)},
                 {"M6", num(c.M6)},
                 {"M7", num(c.M7)},
                 {"M8", num(c.M8)},
                 {"D", num(c.D)},
                 {"eps0_theory", num(c.eps0_theory)},
                 {"eps0_threshold", num(c.eps0_threshold)},
                 {"theoretical_mode", c.theoretical_mode}};
}

ordered step_json(const StepRecord& r) {
  ordered j;
  j["j"] = r.j;
  j["params"] = params_json(r.u);
  j["eps_in"] = num(r.eps_in);
  j["eps_out"] = num(r.eps_out);
  j["eps_quad_bound"] = num(r.eps_quad_bound);
  j["eps_schedule"] = num(r.eps_schedule);
  j["A_norm"] = num(r.A_norm);
  j["B_norm"] = num(r.B_norm);
  j["chi_norm"] = num(r.chi_norm);
  j["S_residual"] = num(r.S_residual);
  j["T_residual"] = num(r.T_residual);
  j["homological_residual"] = num(r.homological_residual);
  j["min_divisor"] = num(r.min_divisor);
  j["lie"] = ordered{{"contraction", num(r.lie.contraction)}, {"gamma", num(r.lie.gamma)},
                     {"chi_norm", num(r.lie.chi_norm)},       {"terms", r.lie.terms},
                     {"last_term_norm", num(r.lie.last_term_norm)},
                     {"tail_bound", num(r.lie.tail_bound)}};
  j["remainder_terms"] = r.remainder_terms;
  j["conditions"] = ordered{{"piccolaunmezzo", num(r.conditions.piccolaunmezzo)},
                            {"smallone", num(r.conditions.smallone)},
                            {"smallv", num(r.conditions.smallv)},
                            {"hold", r.conditions_hold}};
  j["C_operator_norm"] = num(r.C_operator_norm);
  j["C_bound_holds"] = r.C_bound_holds;
  j["min_p_AB"] = r.min_p_AB;
  j["truncation_loss"] = num(r.truncation_loss);
  j["split_exact"] = r.split_exact;
  return j;
}

std::string finish(const ordered& j) { return j.dump(1) + "\n"; }

// ---------------------------------------------------------------------------
// Reading

class Reader {
 public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  json parse(std::string_view text) const {
    try {
      return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::parse, fmt::format("{}: {}", source_, e.what()));
    }
  }

  [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
    throw Error(ErrorKind::parse, fmt::format("{}: field '{}': {}", source_, path, msg));
  }

  const json& field(const json& obj, const std::string& key, const std::string& path) const {
    if (!obj.is_object()) fail(path, "expected an object");
    const auto it = obj.find(key);
    if (it == obj.end()) fail(join(path, key), "missing");
    return *it;
  }

  const json* optional(const json& obj, const std::string& key) const {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
  }

  void only_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path) const {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& item : obj.items()) {
      if (!allowed.count(item.key())) fail(join(path, item.key()), "unknown key");
    }
  }

  double number(const json& v, const std::string& path) const {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s == "inf") return std::numeric_limits<double>::infinity();
      if (s == "-inf") return -std::numeric_limits<double>::infinity();
      if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    }
    fail(path, "expected a number");
  }

  int integer(const json& v, const std::string& path) const {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    const auto x = v.get<long long>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) fail(path, "out of range");
    return static_cast<int>(x);
  }

  std::vector<int> int_vector(const json& v, const std::string& path, int size) const {
    if (!v.is_array()) fail(path, "expected an array of integers");
    if (static_cast<int>(v.size()) != size) fail(path, fmt::format("expected {} entries, got {}", size, v.size()));
    std::vector<int> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(integer(v[i], index(path, i)));
    return out;
  }

  std::vector<double> num_vector(const json& v, const std::string& path, int size) const {
    if (!v.is_array()) fail(path, "expected an array of numbers");
    if (size >= 0 && static_cast<int>(v.size()) != size) {
      fail(path, fmt::format("expected {} entries, got {}", size, v.size()));
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], index(path, i)));
    return out;
  }

  // Terms-only series object, or a plain number for a constant.
  Series series(const json& v, const SpacePtr& space, const std::string& path) const {
    if (v.is_number()) return Series::constant(space, v.get<double>());
    if (!v.is_object()) fail(path, "expected a series object or a number");
    for (const auto& item : v.items()) {
      static const std::set<std::string> allowed{"terms", "n", "m", "a", "K_max", "L_max", "P_max"};
      if (!allowed.count(item.key())) fail(join(path, item.key()), "unknown key");
    }
    const json& terms = field(v, "terms", path);
    const std::string tpath = join(path, "terms");
    if (!terms.is_array()) fail(tpath, "expected an array");
    std::vector<std::pair<ModeKey, cplx>> list;
    for (std::size_t i = 0; i < terms.size(); ++i) {
      const std::string p = index(tpath, i);
      const json& t = terms[i];
      only_keys(t, {"k", "alpha", "e", "p", "re", "im"}, p);
      ModeKey key;
      key.k = int_vector(field(t, "k", p), join(p, "k"), space->n());
      key.alpha = int_vector(field(t, "alpha", p), join(p, "alpha"), space->m());
      key.e = optional(t, "e") ? integer(t["e"], join(p, "e")) : 0;
      key.p = optional(t, "p") ? integer(t["p"], join(p, "p")) : 0;
      const double re = optional(t, "re") ? number(t["re"], join(p, "re")) : 0.0;
      const double im = optional(t, "im") ? number(t["im"], join(p, "im")) : 0.0;
      for (int a : key.alpha) {
        if (a < 0) fail(join(p, "alpha"), "negative power");
      }
      if (key.e < 0 || key.e > 1) fail(join(p, "e"), "η power must be 0 or 1");
      if (key.p < 0) fail(join(p, "p"), "negative decay index");
      if (!space->contains(key)) {
        fail(p, fmt::format("mode outside the truncation (K_max {}, L_max {}, P_max {})",
                            space->truncation().k_max, space->truncation().l_max, space->truncation().p_max));
      }
      list.emplace_back(std::move(key), cplx(re, im));
    }
    return Series::from_terms(space, list);
  }

  SeriesMatrix matrix(const json& v, const SpacePtr& space, int rows, int cols, const std::string& path) const {
    if (!v.is_array() || static_cast<int>(v.size()) != rows) fail(path, fmt::format("expected {} rows", rows));
    SeriesMatrix M(space, rows, cols);
    for (int i = 0; i < rows; ++i) {
      const std::string rp = index(path, static_cast<std::size_t>(i));
      const json& row = v[static_cast<std::size_t>(i)];
      if (!row.is_array() || static_cast<int>(row.size()) != cols) fail(rp, fmt::format("expected {} columns", cols));
      for (int j = 0; j < cols; ++j) {
        M.at(i, j) = series(row[static_cast<std::size_t>(j)], space, index(rp, static_cast<std::size_t>(j)));
      }
    }
    return M;
  }

  IterationParams params(const json& v, const std::string& path) const {
    IterationParams u;
    u.d = number(field(v, "d", path), join(path, "d"));
    u.eps = number(field(v, "eps", path), join(path, "eps"));
    u.zeta = number(field(v, "zeta", path), join(path, "zeta"));
    u.upsilon = number(field(v, "upsilon", path), join(path, "upsilon"));
    u.rho = number(field(v, "rho", path), join(path, "rho"));
    u.sigma = number(field(v, "sigma", path), join(path, "sigma"));
    u.a = number(field(v, "a", path), join(path, "a"));
    u.tau = number(field(v, "tau", path), join(path, "tau"));
    u.gamma = number(field(v, "gamma", path), join(path, "gamma"));
    return u;
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }
  static std::string index(const std::string& path, std::size_t i) { return fmt::format("{}[{}]", path, i); }

 private:
  std::string source_;
};

// Wraps structural errors raised while building core objects.
template <class Fn>
auto guarded(const std::string& source, Fn fn) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::parse) throw;
    throw Error(ErrorKind::parse, fmt::format("{}: {}", source, e.what()));
  }
}

SpacePtr space_from_header(const Reader& r, const json& j, const std::string& path) {
  const int n = r.integer(r.field(j, "n", path), Reader::join(path, "n"));
  const int m = r.integer(r.field(j, "m", path), Reader::join(path, "m"));
  const double a = r.number(r.field(j, "a", path), Reader::join(path, "a"));
  Truncation t;
  t.k_max = r.integer(r.field(j, "K_max", path), Reader::join(path, "K_max"));
  t.l_max = r.integer(r.field(j, "L_max", path), Reader::join(path, "L_max"));
  t.p_max = r.integer(r.field(j, "P_max", path), Reader::join(path, "P_max"));
  return SeriesSpace::make(n, m, a, t);
}

ProblemOptions parse_options(const Reader& r, const json& j, const std::string& path) {
  r.only_keys(j, {"rho", "sigma", "upsilon", "max_steps", "target_eps", "theta1", "theta2", "d_floor",
                  "lie_d_tilde", "lie_rel_tol", "lie_max_terms", "t_end", "tol", "threshold", "seed"},
              path);
  ProblemOptions o;
  auto num_opt = [&](const char* key, double& dst) {
    if (const json* v = r.optional(j, key)) dst = r.number(*v, Reader::join(path, key));
  };
  auto int_opt = [&](const char* key, int& dst) {
    if (const json* v = r.optional(j, key)) dst = r.integer(*v, Reader::join(path, key));
  };
  num_opt("rho", o.rho);
  num_opt("sigma", o.sigma);
  num_opt("upsilon", o.upsilon);
  int_opt("max_steps", o.max_steps);
  num_opt("target_eps", o.target_eps);
  if (const json* v = r.optional(j, "theta1")) o.theta1 = r.number(*v, Reader::join(path, "theta1"));
  if (const json* v = r.optional(j, "theta2")) o.theta2 = r.number(*v, Reader::join(path, "theta2"));
  num_opt("d_floor", o.d_floor);
  num_opt("lie_d_tilde", o.lie_d_tilde);
  num_opt("lie_rel_tol", o.lie_rel_tol);
  int_opt("lie_max_terms", o.lie_max_terms);
  num_opt("t_end", o.t_end);
  num_opt("tol", o.tol);
  num_opt("threshold", o.threshold);
  if (const json* v = r.optional(j, "seed")) {
    if (!v->is_number_unsigned()) r.fail(Reader::join(path, "seed"), "expected a non-negative integer");
    o.seed = v->get<std::uint64_t>();
  }
  if (!(o.rho > 0.0)) r.fail(Reader::join(path, "rho"), "must be positive");
  if (!(o.sigma > 0.0)) r.fail(Reader::join(path, "sigma"), "must be positive");
  if (!(o.upsilon > 0.0 && o.upsilon < 1.0)) r.fail(Reader::join(path, "upsilon"), "must lie in (0, 1)");
  if (o.max_steps < 0) r.fail(Reader::join(path, "max_steps"), "must be non-negative");
  if (!(o.d_floor > 0.0 && o.d_floor <= 1.0 / 6.0)) r.fail(Reader::join(path, "d_floor"), "must lie in (0, 1/6]");
  if (!(o.tol > 0.0)) r.fail(Reader::join(path, "tol"), "must be positive");
  return o;
}

ordered options_json(const ProblemOptions& o) {
  ordered j{{"rho", num(o.rho)},
            {"sigma", num(o.sigma)},
            {"upsilon", num(o.upsilon)},
            {"max_steps", o.max_steps},
            {"target_eps", num(o.target_eps)}};
  if (o.theta1) j["theta1"] = num(*o.theta1);
  if (o.theta2) j["theta2"] = num(*o.theta2);
  j["d_floor"] = num(o.d_floor);
  j["lie_d_tilde"] = num(o.lie_d_tilde);
  j["lie_rel_tol"] = num(o.lie_rel_tol);
  j["lie_max_terms"] = o.lie_max_terms;
  j["t_end"] = num(o.t_end);
  j["tol"] = num(o.tol);
  j["threshold"] = num(o.threshold);
  j["seed"] = o.seed;
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::parse, fmt::format("{}: cannot open for reading", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::parse, fmt::format("{}: cannot open for writing", path.string()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorKind::parse, fmt::format("{}: write failed", path.string()));
}

std::string dump_series(const Series& f) {
  ordered j;
  put_header(j, f.space());
  j["terms"] = terms_json(f)["terms"];
  return finish(j);
}

Series parse_series(std::string_view text, const std::string& source) {
  const Reader r(source);
  const json j = r.parse(text);
  return guarded(source, [&] { return r.series(j, space_from_header(r, j, ""), ""); });
}

std::string dump_structure(const StructureMatrix& S) {
  ordered j;
  j["y_star"] = num_vector(S.y_star());
  j["B12"] = matrix_json(S.B12());
  j["B22"] = matrix_json(S.B22());
  return finish(j);
}

StructureMatrix parse_structure(std::string_view text, const SpacePtr& space, const std::string& source) {
  const Reader r(source);
  const json j = r.parse(text);
  r.only_keys(j, {"y_star", "B12", "B22"}, "");
  return guarded(source, [&] {
    auto y_star = r.num_vector(r.field(j, "y_star", ""), "y_star", space->m());
    SeriesMatrix B12 = r.matrix(r.field(j, "B12", ""), space, space->m(), space->n(), "B12");
    SeriesMatrix B22 = r.optional(j, "B22") ? r.matrix(j["B22"], space, space->n(), space->n(), "B22")
                                            : SeriesMatrix(space, space->n(), space->n());
    return StructureMatrix(std::move(B12), std::move(B22), std::move(y_star));
  });
}

Problem parse_problem(std::string_view text, const std::string& source, const ProblemOverrides& overrides) {
  const Reader r(source);
  const json j = r.parse(text);
  r.only_keys(j, {"n", "m", "a", "epsilon", "tau", "y_star", "trunc", "h", "f", "B12", "B22", "structure",
                  "options", "drop_tolerance", "name"},
              "");
  return guarded(source, [&]() -> Problem {
    const int n = r.integer(r.field(j, "n", ""), "n");
    const int m = r.integer(r.field(j, "m", ""), "m");
    if (n < 1 || n > kMaxDims) r.fail("n", fmt::format("must lie in [1, {}]", kMaxDims));
    if (m < 1 || m > kMaxDims) r.fail("m", fmt::format("must lie in [1, {}]", kMaxDims));
    const double a = r.number(r.field(j, "a", ""), "a");
    if (!(a > 0.0)) r.fail("a", "decay rate must be positive");
    const double epsilon = r.number(r.field(j, "epsilon", ""), "epsilon");
    if (!(epsilon >= 0.0)) r.fail("epsilon", "must be non-negative");
    const double tau = r.number(r.field(j, "tau", ""), "tau");
    if (!(tau >= 0.0)) r.fail("tau", "must be non-negative");
    auto y_star = r.num_vector(r.field(j, "y_star", ""), "y_star", m);

    const json& tj = r.field(j, "trunc", "");
    r.only_keys(tj, {"K_max", "L_max", "P_max"}, "trunc");
    Truncation trunc;
    trunc.k_max = r.integer(r.field(tj, "K_max", "trunc"), "trunc.K_max");
    trunc.l_max = r.integer(r.field(tj, "L_max", "trunc"), "trunc.L_max");
    trunc.p_max = r.integer(r.field(tj, "P_max", "trunc"), "trunc.P_max");
    if (overrides.k_max) trunc.k_max = *overrides.k_max;
    if (trunc.k_max < 0 || trunc.l_max < 0 || trunc.p_max < 0) r.fail("trunc", "orders must be non-negative");
    double drop = 1e-15;
    if (const json* v = r.optional(j, "drop_tolerance")) drop = r.number(*v, "drop_tolerance");

    const SpacePtr space = SeriesSpace::make(n, m, a, trunc, drop);
    Series h = r.series(r.field(j, "h", ""), space, "h");
    Series f = r.series(r.field(j, "f", ""), space, "f");

    const json* structure = r.optional(j, "structure");
    const json* b12 = r.optional(j, "B12");
    if (structure && b12) r.fail("structure", "give either \"structure\" or B12/B22, not both");
    std::optional<StructureMatrix> S;
    if (structure) {
      if (!structure->is_string() || structure->get<std::string>() != "canonical") {
        r.fail("structure", "the only named structure is \"canonical\"");
      }
      if (n != m) r.fail("structure", "canonical structure needs n = m");
      SeriesMatrix B12(space, m, n);
      for (int i = 0; i < m; ++i) B12.at(i, i) = Series::constant(space, -1.0);
      S.emplace(std::move(B12), SeriesMatrix(space, n, n), y_star);
    } else {
      if (!b12) r.fail("B12", "missing (or set \"structure\": \"canonical\")");
      SeriesMatrix B12 = r.matrix(*b12, space, m, n, "B12");
      SeriesMatrix B22 = r.optional(j, "B22") ? r.matrix(j["B22"], space, n, n, "B22")
                                              : SeriesMatrix(space, n, n);
      S.emplace(std::move(B12), std::move(B22), y_star);
    }
    ProblemOptions options;
    if (const json* o = r.optional(j, "options")) options = parse_options(r, *o, "options");
    return Problem{n,     m,          a, epsilon, tau, std::move(y_star), trunc, space, std::move(h),
                   std::move(f), std::move(*S), options};
  });
}

Problem load_problem(const std::filesystem::path& path, const ProblemOverrides& overrides) {
  return parse_problem(read_file(path), path.string(), overrides);
}

std::string dump_problem(const Problem& p) {
  ordered j;
  j["n"] = p.n;
  j["m"] = p.m;
  j["a"] = num(p.a);
  j["epsilon"] = num(p.epsilon);
  j["tau"] = num(p.tau);
  j["y_star"] = num_vector(p.y_star);
  j["trunc"] = ordered{{"K_max", p.trunc.k_max}, {"L_max", p.trunc.l_max}, {"P_max", p.trunc.p_max}};
  j["drop_tolerance"] = num(p.space->drop_tolerance());
  j["h"] = terms_json(p.h);
  j["f"] = terms_json(p.f);
  j["B12"] = matrix_json(p.structure.B12());
  j["B22"] = matrix_json(p.structure.B22());
  j["options"] = options_json(p.options);
  return finish(j);
}

std::string dump_trace(const NormalizationTrace& t) {
  ordered j;
  j["status"] = to_string(t.status);
  j["message"] = t.message;
  j["empirical_mode"] = t.empirical_mode;
  j["warnings"] = t.warnings;
  j["frequency"] = ordered{{"omega_tilde", num_vector(t.freq.omega_tilde)},
                           {"omega", num_vector(t.freq.omega)},
                           {"gamma", num(t.freq.gamma)},
                           {"tau", num(t.freq.tau)},
                           {"K_max", t.freq.k_max}};
  j["u0"] = params_json(t.u0);
  j["constants"] = constants_json(t.constants);
  j["eps"] = num_vector(t.eps);
  j["effective_steps"] = t.steps.size();
  ordered steps = ordered::array();
  for (const auto& s : t.steps) steps.push_back(step_json(s));
  j["steps"] = std::move(steps);
  return finish(j);
}

std::string dump_normal_form(const HamiltonianDecomposition& H) {
  ordered j;
  put_header(j, H.eta.space());
  j["omega_tilde"] = num_vector(H.omega_tilde);
  j["eta"] = terms_json(H.eta);
  j["linear"] = terms_json(H.linear);
  j["A"] = terms_json(H.A);
  ordered B = ordered::array();
  for (const auto& b : H.B) B.push_back(terms_json(b));
  j["B"] = std::move(B);
  j["C"] = matrix_json(H.C);
  j["R"] = terms_json(H.R);
  j["total"] = terms_json(H.total);
  return finish(j);
}

std::string dump_chi_list(const std::vector<Series>& chi, const std::vector<IterationParams>& params) {
  ordered j;
  if (!chi.empty()) put_header(j, chi.front().space());
  ordered steps = ordered::array();
  for (std::size_t i = 0; i < chi.size(); ++i) {
    ordered s;
    s["j"] = i;
    if (i < params.size()) s["params"] = params_json(params[i]);
    s["chi"] = terms_json(chi[i]);
    steps.push_back(std::move(s));
  }
  j["steps"] = std::move(steps);
  return finish(j);
}

ChiList parse_chi_list(std::string_view text, const SpacePtr& space, const std::string& source) {
  const Reader r(source);
  const json j = r.parse(text);
  return guarded(source, [&] {
    if (r.optional(j, "n")) {
      const SpacePtr header = space_from_header(r, j, "");
      if (header->n() != space->n() || header->m() != space->m() ||
          header->decay_rate() != space->decay_rate() || !(header->truncation() == space->truncation())) {
        r.fail("", "series header does not match the problem");
      }
    }
    const json& steps = r.field(j, "steps", "");
    if (!steps.is_array()) r.fail("steps", "expected an array");
    ChiList out;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const std::string p = Reader::index("steps", i);
      out.chi.push_back(r.series(r.field(steps[i], "chi", p), space, Reader::join(p, "chi")));
      if (const json* u = r.optional(steps[i], "params")) out.params.push_back(r.params(*u, Reader::join(p, "params")));
    }
    return out;
  });
}

std::string dump_constants(const ConstantsLedger& c, const IterationParams& u0,
                           const std::vector<IterationParams>& schedule) {
  ordered j;
  j["constants"] = constants_json(c);
  j["u0"] = params_json(u0);
  ordered rows = ordered::array();
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    ordered row = params_json(schedule[i]);
    row["j"] = i;
    rows.push_back(std::move(row));
  }
  j["schedule"] = std::move(rows);
  if (!schedule.empty()) {
    const auto& last = schedule.back();
    j["schedule_limit"] = ordered{{"steps", schedule.size() - 1},
                                  {"rho_ratio", num(last.rho / u0.rho)},
                                  {"sigma_ratio", num(last.sigma / u0.sigma)},
                                  {"upsilon_ratio", num(last.upsilon / u0.upsilon)}};
  }
  return finish(j);
}

std::string dump_diophantine(const DiophantineTable& table, const std::vector<double>& omega, double tau) {
  ordered j;
  j["omega"] = num_vector(omega);
  j["tau"] = num(tau);
  j["K_max"] = table.shells.size();
  j["gamma_K"] = num(table.gamma_K);
  ordered shells = ordered::array();
  for (const auto& s : table.shells) {
    shells.push_back(ordered{{"shell", s.shell}, {"k", s.k}, {"divisor", num(s.divisor)},
                             {"gamma_shell", num(s.gamma_shell)}});
  }
  j["shells"] = std::move(shells);
  return finish(j);
}

std::string dump_torus_report(const TorusReport& rep, double threshold) {
  ordered j;
  j["naive_error"] = num(rep.naive_error);
  j["mapped_error"] = num(rep.mapped_error);
  j["improvement"] = num(rep.improvement);
  j["naive_action_end"] = num(rep.naive_action_end);
  j["mapped_action_end"] = num(rep.mapped_action_end);
  j["action_improvement"] = num(rep.action_improvement);
  j["naive_drift"] = num(rep.naive_drift);
  j["mapped_drift"] = num(rep.mapped_drift);
  j["threshold"] = num(threshold);
  j["passed"] = std::min(rep.improvement, rep.action_improvement) >= threshold;
  ordered orbits = ordered::array();
  for (const auto& o : rep.orbits) {
    orbits.push_back(ordered{{"x0", num(o.x0)},
                             {"naive_error", num(o.naive_error)},
                             {"mapped_error", num(o.mapped_error)},
                             {"naive_action_end", num(o.naive_action_end)},
                             {"mapped_action_end", num(o.mapped_action_end)},
                             {"naive_drift", num(o.naive_drift)},
                             {"mapped_drift", num(o.mapped_drift)}});
  }
  j["orbits"] = std::move(orbits);
  return finish(j);
}

std::string trajectory_csv(const std::vector<TrajectorySample>& samples) {
  std::string out;
  if (samples.empty()) return out;
  const auto& first = samples.front();
  out += "t";
  for (std::size_t i = 0; i < first.point.y.size(); ++i) out += fmt::format(",y{}", i + 1);
  for (std::size_t l = 0; l < first.point.x.size(); ++l) out += fmt::format(",x{}", l + 1);
  out += ",eta,xi,torus_error";
  for (std::size_t l = 0; l < first.phase_drift.size(); ++l) out += fmt::format(",drift{}", l + 1);
  out += "\n";
  for (const auto& s : samples) {
    out += fmt::format("{:.17g}", s.t);
    for (const auto& v : s.point.y) out += fmt::format(",{:.17g}", v.real());
    for (const auto& v : s.point.x) out += fmt::format(",{:.17g}", v.real());
    out += fmt::format(",{:.17g},{:.17g},{:.17g}", s.point.eta.real(), s.point.xi.real(), s.torus_error);
    for (double d : s.phase_drift) out += fmt::format(",{:.17g}", d);
    out += "\n";
  }
  return out;
}

}  // namespace poisson_kam::io
