#pragma once

// Text formats: JSON documents for problems, series and run artifacts, CSV
// for trajectories. Doubles are written in shortest round-trip form, so a
// dump/parse cycle is bit-exact; non-finite values are written as the
// strings "inf", "-inf" and "nan". Every parse failure is ErrorKind::parse
// with the offending line or field path.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "poisson_kam/dynamics.hpp"
#include "poisson_kam/homological.hpp"
#include "poisson_kam/kolmogorov.hpp"

namespace poisson_kam::io {

std::string read_file(const std::filesystem::path& path);
/// Creates parent directories.
void write_file(const std::filesystem::path& path, std::string_view text);

/// {n, m, a, K_max, L_max, P_max, terms: [{k, alpha, e, p, re, im}]}.
std::string dump_series(const Series& f);
Series parse_series(std::string_view text, const std::string& source = "<series>");

/// {y_star, B12: [[series]], B22: [[series]]} with terms-only entries.
std::string dump_structure(const StructureMatrix& S);
StructureMatrix parse_structure(std::string_view text, const SpacePtr& space,
                                const std::string& source = "<structure>");

struct ProblemOverrides {
  std::optional<int> k_max;
};

/// Top level: n, m, a, epsilon, tau, y_star, trunc {K_max, L_max, P_max},
/// h, f, then either B12 (and optionally B22) or "structure": "canonical",
/// and an optional options object. Unknown keys are rejected.
Problem parse_problem(std::string_view text, const std::string& source = "<problem>",
                      const ProblemOverrides& overrides = {});
Problem load_problem(const std::filesystem::path& path, const ProblemOverrides& overrides = {});
std::string dump_problem(const Problem& problem);

std::string dump_trace(const NormalizationTrace& trace);
std::string dump_normal_form(const HamiltonianDecomposition& H);

struct ChiList {
  std::vector<Series> chi;
  std::vector<IterationParams> params;
};
std::string dump_chi_list(const std::vector<Series>& chi, const std::vector<IterationParams>& params);
ChiList parse_chi_list(std::string_view text, const SpacePtr& space,
                       const std::string& source = "<chi>");

std::string dump_constants(const ConstantsLedger& constants, const IterationParams& u0,
                           const std::vector<IterationParams>& schedule);
std::string dump_diophantine(const DiophantineTable& table, const std::vector<double>& omega,
                             double tau);
std::string dump_torus_report(const TorusReport& report, double threshold);

/// Header t, y…, x…, eta, xi, torus_error, drift…; one row per sample.
std::string trajectory_csv(const std::vector<TrajectorySample>& samples);

}  // namespace poisson_kam::io
