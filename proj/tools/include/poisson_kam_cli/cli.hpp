#pragma once

// Batch front-end. Each command reads one problem file, writes its
// artifacts into the output directory and returns the process exit code.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace poisson_kam::cli {

struct Overrides {
  std::optional<int> max_steps;
  std::optional<double> target_eps;
  std::optional<double> t_end;
  std::optional<double> tol;
  std::optional<double> d_floor;
  std::optional<double> threshold;
  std::optional<int> k_max;
};

struct RunConfig {
  std::string command;
  std::filesystem::path problem_path;
  std::filesystem::path output_dir = ".";
  Overrides overrides;
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int input_error = 1;  // malformed input, resonance, missing artifacts
inline constexpr int refused = 2;      // also: verify below threshold, resonant check-diophantine
inline constexpr int diverged = 3;
inline constexpr int max_steps = 4;
}  // namespace exit_code

/// normalize: 0 converged, 1 bad input, 2 refused, 3 diverged, 4 step budget exhausted.
int cmd_normalize(const RunConfig& config, std::ostream& out, std::ostream& err);
/// verify: 0 iff both improvement factors reach the threshold, 2 otherwise,
/// 1 when the normalization artifacts are missing.
int cmd_verify(const RunConfig& config, std::ostream& out, std::ostream& err);
/// check-diophantine: 0 with the γ table, 2 on resonance.
int cmd_check_diophantine(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_constants(const RunConfig& config, std::ostream& out, std::ostream& err);
/// lie-check: normalizes in memory, then compares every χ_j's Lie map with
/// its time-1 flow; 0 iff all agree within max(10·tol, tail bound).
int cmd_lie_check(const RunConfig& config, std::ostream& out, std::ostream& err);

int dispatch(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Parses argv with CLI11 and dispatches.
int main_entry(int argc, char** argv);

}  // namespace poisson_kam::cli
