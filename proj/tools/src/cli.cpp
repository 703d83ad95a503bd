#include "poisson_kam_cli/cli.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "poisson_kam/dynamics.hpp"
#include "poisson_kam/homological.hpp"
#include "poisson_kam/io.hpp"
#include "poisson_kam/kolmogorov.hpp"

namespace poisson_kam::cli {

namespace {

namespace fs = std::filesystem;

// Flags override file values, which override defaults.
Problem load(const RunConfig& c) {
  io::ProblemOverrides po;
  po.k_max = c.overrides.k_max;
  Problem p = io::load_problem(c.problem_path, po);
  const Overrides& o = c.overrides;
  if (o.max_steps) p.options.max_steps = *o.max_steps;
  if (o.target_eps) p.options.target_eps = *o.target_eps;
  if (o.t_end) p.options.t_end = *o.t_end;
  if (o.tol) p.options.tol = *o.tol;
  if (o.d_floor) p.options.d_floor = *o.d_floor;
  if (o.threshold) p.options.threshold = *o.threshold;
  if (p.options.max_steps < 0) throw Error(ErrorKind::parse, "--max-steps must be non-negative");
  if (!(p.options.tol > 0.0)) throw Error(ErrorKind::parse, "--tol must be positive");
  if (!(p.options.t_end >= 0.0)) throw Error(ErrorKind::parse, "--t-end must be non-negative");
  if (!(p.options.d_floor > 0.0 && p.options.d_floor <= 1.0 / 6.0)) {
    throw Error(ErrorKind::parse, "--d-floor must lie in (0, 1/6]");
  }
  return p;
}

template <class Fn>
int guarded(std::ostream& err, Fn fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return exit_code::input_error;
}

int status_code(RunStatus s) {
  switch (s) {
    case RunStatus::converged: return exit_code::ok;
    case RunStatus::refused: return exit_code::refused;
    case RunStatus::diverged: return exit_code::diverged;
    case RunStatus::max_steps: return exit_code::max_steps;
  }
  return exit_code::input_error;
}

nlohmann::ordered_json finite_or_string(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

}  // namespace

int cmd_normalize(const RunConfig& c, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Problem p = load(c);
    const RunResult r = run(p, p.options.max_steps, p.options.target_eps);
    io::write_file(c.output_dir / "trace.json", io::dump_trace(r.trace));
    io::write_file(c.output_dir / "normal_form.json", io::dump_normal_form(r.normal_form));
    io::write_file(c.output_dir / "chi.json", io::dump_chi_list(r.chi_list, r.params));
    for (const auto& w : r.trace.warnings) err << "warning: " << w << "\n";
    out << fmt::format("status {}: {} step(s), eps {:.3e} -> {:.3e}\n", to_string(r.trace.status),
                       r.trace.steps.size(), r.trace.eps.front(), r.trace.eps.back());
    if (!r.trace.message.empty()) err << r.trace.message << "\n";
    return status_code(r.trace.status);
  });
}

int cmd_verify(const RunConfig& c, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Problem p = load(c);
    const fs::path chi_path = c.output_dir / "chi.json";
    if (!fs::exists(chi_path)) {
      err << "error: missing normalization artifact " << chi_path.string() << " (run normalize first)\n";
      return exit_code::input_error;
    }
    const io::ChiList chi = io::parse_chi_list(io::read_file(chi_path), p.space, chi_path.string());
    const TorusReport rep =
        torus_persistence_report(p, chi.chi, chi.params, p.options.t_end, p.options.tol, 8);
    io::write_file(c.output_dir / "report.json", io::dump_torus_report(rep, p.options.threshold));
    io::write_file(c.output_dir / "naive_trajectory.csv", io::trajectory_csv(rep.naive_trajectory));
    io::write_file(c.output_dir / "mapped_trajectory.csv", io::trajectory_csv(rep.mapped_trajectory));
    const double factor = std::min(rep.improvement, rep.action_improvement);
    out << fmt::format("torus error {:.3e} naive vs {:.3e} mapped, improvement {:.3g} (threshold {:.3g})\n",
                       rep.naive_error, rep.mapped_error, factor, p.options.threshold);
    return factor >= p.options.threshold ? exit_code::ok : exit_code::refused;
  });
}

int cmd_check_diophantine(const RunConfig& c, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Problem p = load(c);
    const ProblemFrequencies f = problem_frequencies(p);
    const int k_max = std::max(p.trunc.k_max, 1);
    try {
      const DiophantineTable table = diophantine_table(f.omega, p.tau, k_max);
      io::write_file(c.output_dir / "diophantine.json", io::dump_diophantine(table, f.omega, p.tau));
      out << fmt::format("gamma_K = {:.6g} over |k| <= {}\n", table.gamma_K, k_max);
      return exit_code::ok;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::resonance) throw;
      err << e.what() << "\n";
      return exit_code::refused;
    }
  });
}

int cmd_constants(const RunConfig& c, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Problem p = load(c);
    const Initialization init = init_from_problem(p);
    const ConstantsLedger& k = init.constants;
    const auto schedule = parameter_schedule(init.u0, 200, k.D, k.eps0_theory, k.omega_norm, p.options.d_floor);
    io::write_file(c.output_dir / "constants.json", io::dump_constants(k, init.u0, schedule));
    out << fmt::format("D = {:.6g}, eps0 = {:.6g}, threshold = {:.6g} ({} mode)\n", k.D, k.eps0_theory,
                       k.eps0_threshold, k.theoretical_mode ? "theoretical" : "empirical");
    return exit_code::ok;
  });
}

int cmd_lie_check(const RunConfig& c, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Problem p = load(c);
    const RunResult r = run(p, p.options.max_steps, p.options.target_eps);
    const double tol = c.overrides.tol ? *c.overrides.tol : 1e-12;
    const StructureMatrix& S = r.structure;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    bool all = true;
    double worst = 0.0;
    for (std::size_t j = 0; j < r.chi_list.size(); ++j) {
      const double allowed = std::max(10.0 * tol, r.trace.steps[j].lie.tail_bound);
      double dist = 0.0;
      for (int i = 0; i < 4; ++i) {
        ExtendedPoint q;
        q.y.assign(static_cast<std::size_t>(S.m()), 0.0);
        q.x.assign(static_cast<std::size_t>(S.n()), std::numbers::pi * i / 2.0);
        dist = std::max(dist, lie_vs_flow_check(r.chi_list[j], S, q, tol));
      }
      all = all && dist <= allowed;
      worst = std::max(worst, dist);
      rows.push_back({{"j", j}, {"distance", finite_or_string(dist)}, {"allowed", finite_or_string(allowed)},
                      {"passed", dist <= allowed}});
    }
    nlohmann::ordered_json doc{{"tol", tol}, {"passed", all}, {"steps", std::move(rows)}};
    io::write_file(c.output_dir / "lie_check.json", doc.dump(1) + "\n");
    out << fmt::format("{} generating function(s), worst distance {:.3e}\n", r.chi_list.size(), worst);
    return all ? exit_code::ok : exit_code::refused;
  });
}

int dispatch(const RunConfig& c, std::ostream& out, std::ostream& err) {
  if (c.command == "normalize") return cmd_normalize(c, out, err);
  if (c.command == "verify") return cmd_verify(c, out, err);
  if (c.command == "check-diophantine") return cmd_check_diophantine(c, out, err);
  if (c.command == "constants") return cmd_constants(c, out, err);
  if (c.command == "lie-check") return cmd_lie_check(c, out, err);
  err << "error: unknown command '" << c.command << "'\n";
  return exit_code::input_error;
}

int main_entry(int argc, char** argv) {
  CLI::App app{"Kolmogorov normal forms for Poisson systems with time-decaying perturbations"};
  app.require_subcommand(1, 1);

  RunConfig config;
  std::string problem, out_dir = ".";
  int max_steps = 0, k_max = 0;
  double target_eps = 0, t_end = 0, tol = 0, d_floor = 0, threshold = 0;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"normalize", "run the normalization and write trace.json, normal_form.json, chi.json"},
      {"verify", "torus persistence check against a previous normalize run"},
      {"check-diophantine", "worst small divisor per |k| shell"},
      {"constants", "constants ledger and parameter schedule"},
      {"lie-check", "Lie map versus numerical flow for every generating function"}};
  struct Bound {
    CLI::App* app;
    CLI::Option *max_steps, *target_eps, *t_end, *tol, *d_floor, *threshold, *k_max;
  };
  std::vector<Bound> bound;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--problem", problem, "problem file (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory");
    Bound b{sub,
            sub->add_option("--max-steps", max_steps, "normalization step budget"),
            sub->add_option("--target-eps", target_eps, "stop once max(|A|, |B|) falls below this"),
            sub->add_option("--t-end", t_end, "integration horizon"),
            sub->add_option("--tol", tol, "integrator tolerance"),
            sub->add_option("--d-floor", d_floor, "lower clamp of the d schedule"),
            sub->add_option("--threshold", threshold, "required improvement factor"),
            sub->add_option("--k-max", k_max, "Fourier truncation override")};
    bound.push_back(b);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    app.exit(e);
    return exit_code::input_error;
  }

  for (const auto& b : bound) {
    if (!b.app->parsed()) continue;
    config.command = b.app->get_name();
    if (b.max_steps->count()) config.overrides.max_steps = max_steps;
    if (b.target_eps->count()) config.overrides.target_eps = target_eps;
    if (b.t_end->count()) config.overrides.t_end = t_end;
    if (b.tol->count()) config.overrides.tol = tol;
    if (b.d_floor->count()) config.overrides.d_floor = d_floor;
    if (b.threshold->count()) config.overrides.threshold = threshold;
    if (b.k_max->count()) config.overrides.k_max = k_max;
  }
  config.problem_path = problem;
  config.output_dir = out_dir;
  return dispatch(config, std::cout, std::cerr);
}

}  // namespace poisson_kam::cli
