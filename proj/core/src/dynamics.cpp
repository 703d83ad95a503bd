#include "poisson_kam/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/numeric/odeint.hpp>
#include <fmt/format.h>

#include "poisson_kam/parallel.hpp"

namespace poisson_kam {

namespace {

namespace ode = boost::numeric::odeint;
using State = std::vector<double>;

// State layout: y (m), x (n), η, ξ.
class VectorField {
 public:
  VectorField(const Series& H, const StructureMatrix& S) : S_(S), m_(S.m()), n_(S.n()) {
    if (!H.space().same_as(*S.space())) {
      throw Error(ErrorKind::structural, "integrate: H and the structure matrix use different spaces");
    }
    for (int i = 0; i < m_; ++i) Hy_.push_back(partial_y(H, i));
    for (int l = 0; l < n_; ++l) Hx_.push_back(partial_x(H, l));
    Heta_.emplace_back(partial_eta(H));
    Hxi_.emplace_back(partial_xi(H));
    y_.resize(static_cast<std::size_t>(m_));
    x_.resize(static_cast<std::size_t>(n_));
    hy_.resize(static_cast<std::size_t>(m_));
    hx_.resize(static_cast<std::size_t>(n_));
  }

  void operator()(const State& z, State& dz, double /*t*/) {
    for (int i = 0; i < m_; ++i) y_[static_cast<std::size_t>(i)] = z[static_cast<std::size_t>(i)];
    for (int l = 0; l < n_; ++l) x_[static_cast<std::size_t>(l)] = z[static_cast<std::size_t>(m_ + l)];
    const cplx eta = z[static_cast<std::size_t>(m_ + n_)];
    const cplx xi = z[static_cast<std::size_t>(m_ + n_ + 1)];
    for (int i = 0; i < m_; ++i) hy_[static_cast<std::size_t>(i)] = eval(Hy_[static_cast<std::size_t>(i)], y_, x_, eta, xi).real();
    for (int l = 0; l < n_; ++l) hx_[static_cast<std::size_t>(l)] = eval(Hx_[static_cast<std::size_t>(l)], y_, x_, eta, xi).real();
    std::fill(dz.begin(), dz.end(), 0.0);
    for (int i = 0; i < m_; ++i) {
      for (int l = 0; l < n_; ++l) {
        const Series& b = S_.B12().at(i, l);
        if (b.empty()) continue;
        const double v = eval(b, y_, x_, eta, xi).real();
        dz[static_cast<std::size_t>(i)] += v * hx_[static_cast<std::size_t>(l)];
        dz[static_cast<std::size_t>(m_ + l)] -= v * hy_[static_cast<std::size_t>(i)];
      }
    }
    if (S_.has_B22()) {
      for (int l = 0; l < n_; ++l) {
        for (int k = 0; k < n_; ++k) {
          const Series& b = S_.B22().at(l, k);
          if (b.empty()) continue;
          dz[static_cast<std::size_t>(m_ + l)] += eval(b, y_, x_, eta, xi).real() * hx_[static_cast<std::size_t>(k)];
        }
      }
    }
    dz[static_cast<std::size_t>(m_ + n_)] = -eval(Hxi_.front(), y_, x_, eta, xi).real();
    dz[static_cast<std::size_t>(m_ + n_ + 1)] = eval(Heta_.front(), y_, x_, eta, xi).real();
  }

 private:
  const StructureMatrix& S_;
  int m_;
  int n_;
  SeriesVector Hy_, Hx_, Heta_, Hxi_;
  std::vector<cplx> y_, x_;
  std::vector<double> hy_, hx_;
};

State pack(const ExtendedPoint& p, int m, int n) {
  if (static_cast<int>(p.y.size()) != m || static_cast<int>(p.x.size()) != n) {
    throw Error(ErrorKind::structural, "integrate: start point has the wrong dimensions");
  }
  State z;
  z.reserve(static_cast<std::size_t>(m + n + 2));
  for (const auto& v : p.y) z.push_back(v.real());
  for (const auto& v : p.x) z.push_back(v.real());
  z.push_back(p.eta.real());
  z.push_back(p.xi.real());
  return z;
}

ExtendedPoint unpack(const State& z, int m, int n) {
  ExtendedPoint p;
  for (int i = 0; i < m; ++i) p.y.emplace_back(z[static_cast<std::size_t>(i)]);
  for (int l = 0; l < n; ++l) p.x.emplace_back(z[static_cast<std::size_t>(m + l)]);
  p.eta = z[static_cast<std::size_t>(m + n)];
  p.xi = z[static_cast<std::size_t>(m + n + 1)];
  return p;
}

double action_distance(const ExtendedPoint& p) {
  double s = 0.0;
  for (const auto& v : p.y) s += std::norm(v.real());
  return std::sqrt(s);
}

std::vector<double> drift(const ExtendedPoint& p, const ExtendedPoint& p0,
                          const std::vector<double>& omega, double t) {
  std::vector<double> d(p.x.size());
  for (std::size_t l = 0; l < p.x.size(); ++l) {
    const double w = l < omega.size() ? omega[l] : 0.0;
    d[l] = wrap_angle(p.x[l].real() - p0.x[l].real() - w * t);
  }
  return d;
}

double max_abs(const std::vector<double>& v) {
  double r = 0.0;
  for (double x : v) r = std::max(r, std::abs(x));
  return r;
}

template <class Observer>
void run_dopri(const Series& H, const StructureMatrix& S, const ExtendedPoint& start, double t_end,
               double tol, Observer&& observe) {
  if (!(tol > 0.0)) throw Error(ErrorKind::domain, "integrate: tolerance must be positive");
  if (!(t_end >= 0.0)) throw Error(ErrorKind::domain, "integrate: t_end must be non-negative");
  const int m = S.m();
  const int n = S.n();
  VectorField field(H, S);
  State z = pack(start, m, n);
  observe(0.0, z);
  if (t_end == 0.0) return;
  auto stepper = ode::make_dense_output(tol, tol, ode::runge_kutta_dopri5<State>());
  stepper.initialize(z, 0.0, std::min(1e-2, t_end));
  auto sys = [&field](const State& s, State& ds, double t) { field(s, ds, t); };
  try {
    while (true) {
      const auto [t0, t1] = stepper.do_step(sys);
      if (t1 >= t_end) {
        stepper.calc_state(t_end, z);
        observe(t_end, z);
        return;
      }
      observe(t1, stepper.current_state());
      if (t1 - t0 < 1e-13 * std::max(1.0, std::abs(t1))) {
        throw Error(ErrorKind::stiffness, fmt::format("integrate: step size {:.3g} underflows at t = {:.6g}",
                                                      t1 - t0, t1));
      }
    }
  } catch (const ode::odeint_error& e) {
    throw Error(ErrorKind::stiffness, fmt::format("integrate: {}", e.what()));
  }
}

}  // namespace

double wrap_angle(double angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(angle, two_pi);
  if (r <= -std::numbers::pi) r += two_pi;
  if (r > std::numbers::pi) r -= two_pi;
  return r;
}

std::vector<TrajectorySample> integrate(const Series& H, const StructureMatrix& S,
                                        const ExtendedPoint& start, double t_end, double tol,
                                        const std::vector<double>& omega) {
  const int m = S.m();
  const int n = S.n();
  std::vector<TrajectorySample> out;
  ExtendedPoint p0;
  run_dopri(H, S, start, t_end, tol, [&](double t, const State& z) {
    TrajectorySample s;
    s.t = t;
    s.point = unpack(z, m, n);
    if (out.empty()) p0 = s.point;
    s.torus_error = action_distance(s.point);
    s.phase_drift = drift(s.point, p0, omega, t);
    out.push_back(std::move(s));
  });
  return out;
}

ExtendedPoint flow(const Series& H, const StructureMatrix& S, const ExtendedPoint& start,
                   double t_end, double tol) {
  State last;
  run_dopri(H, S, start, t_end, tol, [&](double, const State& z) { last = z; });
  return unpack(last, S.m(), S.n());
}

TorusReport torus_persistence_report(const Problem& problem, const std::vector<Series>& chi_list,
                                     const std::vector<IterationParams>& params, double t_end,
                                     double tol, int angles) {
  if (angles < 1) throw Error(ErrorKind::domain, "torus report: need at least one initial angle");
  const Initialization init = init_from_problem(problem);
  const StructureMatrix& S = init.structure;
  const Series& H = init.H.total;
  const std::vector<double>& omega = init.freq.omega;
  const ComposedMap map(chi_list, S, params);
  const int m = S.m();
  const int n = S.n();
  const double golden = (std::sqrt(5.0) - 1.0) / 2.0;

  TorusReport report;
  report.orbits.resize(static_cast<std::size_t>(angles));
  std::vector<std::vector<TrajectorySample>> first(2);

  // Measures one trajectory in normalized coordinates.
  auto measure = [&](const ExtendedPoint& start, double& sup_err, double& sup_drift, double& action_end,
                     std::vector<TrajectorySample>* keep) {
    std::vector<TrajectorySample> traj = integrate(H, S, start, t_end, tol, omega);
    const ExtendedPoint q0 = map.inverse(traj.front().point);
    for (auto& s : traj) {
      const ExtendedPoint q = map.inverse(s.point);
      s.torus_error = action_distance(q);
      s.phase_drift = drift(q, q0, omega, s.t);
      sup_err = std::max(sup_err, s.torus_error);
      sup_drift = std::max(sup_drift, max_abs(s.phase_drift));
    }
    action_end = action_distance(traj.back().point);
    if (keep) *keep = std::move(traj);
  };

  parallel_for(static_cast<std::size_t>(angles), [&](std::size_t i) {
    ExtendedPoint torus;
    torus.y.assign(static_cast<std::size_t>(m), 0.0);
    const double base = 2.0 * std::numbers::pi * static_cast<double>(i) / angles;
    for (int l = 0; l < n; ++l) {
      torus.x.emplace_back(wrap_angle(base + 2.0 * std::numbers::pi * golden * l));
    }
    TorusOrbit& o = report.orbits[i];
    o.x0 = base;
    measure(torus, o.naive_error, o.naive_drift, o.naive_action_end, i == 0 ? &first[0] : nullptr);
    measure(map.forward(torus), o.mapped_error, o.mapped_drift, o.mapped_action_end,
            i == 0 ? &first[1] : nullptr);
  });

  for (const auto& o : report.orbits) {
    report.naive_error = std::max(report.naive_error, o.naive_error);
    report.mapped_error = std::max(report.mapped_error, o.mapped_error);
    report.naive_action_end = std::max(report.naive_action_end, o.naive_action_end);
    report.mapped_action_end = std::max(report.mapped_action_end, o.mapped_action_end);
    report.naive_drift = std::max(report.naive_drift, o.naive_drift);
    report.mapped_drift = std::max(report.mapped_drift, o.mapped_drift);
  }
  // 0/0 counts as a perfect improvement.
  auto ratio = [](double num, double den) {
    return den > 0.0 ? num / den : std::numeric_limits<double>::infinity();
  };
  report.improvement = ratio(report.naive_error, report.mapped_error);
  report.action_improvement = ratio(report.naive_action_end, report.mapped_action_end);
  report.naive_trajectory = std::move(first[0]);
  report.mapped_trajectory = std::move(first[1]);
  return report;
}

double lie_vs_flow_check(const Series& chi, const StructureMatrix& S, const ExtendedPoint& point,
                         double tol) {
  const int m = S.m();
  const int n = S.n();
  const ExtendedPoint start = unpack(pack(point, m, n), m, n);
  const ExtendedPoint by_series = lie_coordinate_map(chi, S, {}).apply(start);
  const ExtendedPoint by_flow = flow(neg(chi), S, start, 1.0, tol);
  double d = std::abs(by_series.eta.real() - by_flow.eta.real());
  d = std::max(d, std::abs(by_series.xi.real() - by_flow.xi.real()));
  for (int i = 0; i < m; ++i) {
    d = std::max(d, std::abs(by_series.y[static_cast<std::size_t>(i)].real() -
                             by_flow.y[static_cast<std::size_t>(i)].real()));
  }
  for (int l = 0; l < n; ++l) {
    d = std::max(d, std::abs(by_series.x[static_cast<std::size_t>(l)].real() -
                             by_flow.x[static_cast<std::size_t>(l)].real()));
  }
  return d;
}

}  // namespace poisson_kam
