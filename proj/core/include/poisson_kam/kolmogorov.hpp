#pragma once

// Kolmogorov normalization for H = η + h(y) + ε f(y, x, ξ) under the extended
// bracket. Each step removes A + B·y with a generating function χ = S + T·y
// and leaves η + ω̃·y + ½ C y·y + R plus new, smaller A, B.

#include <optional>
#include <string>
#include <vector>

#include "poisson_kam/bracket.hpp"
#include "poisson_kam/ftseries.hpp"
#include "poisson_kam/homological.hpp"

namespace poisson_kam {

struct ProblemOptions {
  double rho = 2.0;
  double sigma = 2.0;
  double upsilon = 0.9;
  int max_steps = 8;
  double target_eps = 1e-12;
  std::optional<double> theta1;
  std::optional<double> theta2;
  double d_floor = 1e-3;
  double lie_d_tilde = 0.5;
  double lie_rel_tol = 1e-14;
  int lie_max_terms = 40;
  double t_end = 100.0;
  double tol = 1e-10;
  double threshold = 10.0;
  std::uint64_t seed = 1;
};

/// A user problem in original coordinates (expansion point y_star).
struct Problem {
  int n = 0;
  int m = 0;
  double a = 0.0;
  double epsilon = 0.0;
  double tau = 0.0;
  std::vector<double> y_star;
  Truncation trunc;
  SpacePtr space;
  Series h;  // h(y)
  Series f;  // f(y, x, ξ), every term decaying (p ≥ 1)
  StructureMatrix structure;
  ProblemOptions options;
};

struct HamiltonianDecomposition {
  std::vector<double> omega_tilde;
  Series eta;     // η
  Series linear;  // ω̃·y
  Series A;
  SeriesVector B;
  SeriesMatrix C;
  Series R;
  Series total;  // the Hamiltonian this decomposition was split from

  /// η + ω̃·y + A + B·y + ½ C y·y + R.
  Series reassembled() const;
  /// ω̃·y + ½ C y·y + R.
  Series h() const;
  /// A + B·y.
  Series g() const;
};

struct IterationParams {
  double d = 0.0;
  double eps = 0.0;
  double zeta = 0.0;
  double upsilon = 0.0;
  double rho = 0.0;
  double sigma = 0.0;
  double a = 0.0;
  double tau = 0.0;
  double gamma = 0.0;
};

struct ThetaConstants {
  double theta1 = 0.0;
  double theta2 = 0.0;
};

/// Per-mode constants of the homological estimate at (d, σ):
/// Θ1 = max a(dσ)^{2τ} e^{-|k|dσ}/|ik·ω - pa|, Θ2 the same with an extra
/// |k|dσ, raised to at least Θ1.
ThetaConstants measured_theta(const SeriesSpace& space, const FrequencyData& freq, double a,
                              double d, double sigma);

struct ConstantsLedger {
  double theta1 = 0.0;
  double theta2 = 0.0;
  double rho_star = 0.0;
  double sigma_star = 0.0;
  double omega_norm = 0.0;  // |ω|₁
  double B0_norm = 0.0;
  double B1_omega_norm = 0.0;
  double M_B = 0.0;
  double M_h = 0.0;
  double M_f = 0.0;
  double M_h_tilde = 0.0;
  double Gamma = 0.0;  // at (ρ₀, σ₀)
  double M0 = 0, M1 = 0, M2 = 0, M3 = 0, M4 = 0, M5 = 0, M6 = 0, M7 = 0, M8 = 0;
  double D = 0.0;
  double eps0_theory = 0.0;    // m ε M_f / ρ₀
  double eps0_threshold = 0.0;  // a⁴ / (D 12^{8(τ+1)})
  bool theoretical_mode = false;
};

/// Every constant by its closed formula. `u0` supplies ρ₀, σ₀, a and τ.
ConstantsLedger constants_ledger(const StructureMatrix& S, const IterationParams& u0,
                                 const FrequencyData& freq, double theta1, double theta2,
                                 double M_h, double M_f, double epsilon, double rho);

/// Left-hand sides of the smallness conditions; each must be ≤ 1/2.
struct SmallnessValues {
  double piccolaunmezzo = 0.0;  // ε D/(a⁴υ²d^{8(τ+1)})
  double smallone = 0.0;        // ε 8e²M_B M5/(a²υ d^{4τ+3}(ρ*σ*)²)
  double smallv = 0.0;          // ε M8/(a²υ²d^{4τ+5}ζ)
};
SmallnessValues smallness(const ConstantsLedger& c, const IterationParams& u, double eps);

/// ε_{j+1} = D ε_j² / (a⁴ υ_j² d_j^{8(τ+1)}).
double quadratic_bound(const ConstantsLedger& c, const IterationParams& u, double eps);

/// d_j for j ≥ 1: (D ε₀/(a⁴υ_j²))^{1/(8(τ+1))} (j+2)²/(j+1)⁴ clamped to
/// [d_floor, 1/6]; d₀ = 1/6.
double schedule_d(int j, double D, double eps0, double a, double tau, double upsilon,
                  double d_floor);

/// (ρ,σ) ← (1-3d)(ρ,σ), υ ← (1-d^{4τ+3})υ, then d and ζ for step j+1.
IterationParams advance(const IterationParams& u, int j_next, double D, double eps0,
                        double omega_norm, double d_floor);

/// Parameters u_0 … u_steps of the schedule with ε_j = ε₀(j+1)^{-16(τ+1)}.
std::vector<IterationParams> parameter_schedule(const IterationParams& u0, int steps, double D,
                                                double eps0, double omega_norm, double d_floor);

struct Initialization {
  HamiltonianDecomposition H;
  IterationParams u0;
  FrequencyData freq;
  StructureMatrix structure;  // shifted to y* = 0
  ConstantsLedger constants;
};

struct ProblemFrequencies {
  std::vector<double> omega_tilde;  // h_y(y*)
  std::vector<double> omega;        // 𝓑⁰ω̃
};
/// Frequencies of the unperturbed torus, without the Diophantine scan.
ProblemFrequencies problem_frequencies(const Problem& problem);

/// Shifts the expansion point to the origin and splits εf + h.
Initialization init_from_problem(const Problem& problem);

struct StepRecord {
  int j = 0;
  IterationParams u;
  double eps_in = 0.0;
  double eps_out = 0.0;
  double eps_quad_bound = 0.0;
  double eps_schedule = 0.0;
  double A_norm = 0.0;
  double B_norm = 0.0;
  double chi_norm = 0.0;
  double S_residual = 0.0;
  double T_residual = 0.0;
  double homological_residual = 0.0;  // |α| ≤ 1 part of g + χ_ξ + {χ,h}
  double min_divisor = 0.0;
  LieDiagnostics lie;
  int remainder_terms = 0;
  SmallnessValues conditions;
  bool conditions_hold = false;
  double C_operator_norm = 0.0;
  bool C_bound_holds = false;
  int min_p_AB = 0;
  double truncation_loss = 0.0;
  bool split_exact = false;
};

struct StepResult {
  HamiltonianDecomposition H;
  Series chi;
  IterationParams u_next;
  StepRecord record;
};

struct StepOptions {
  double lie_d_tilde = 0.5;
  double lie_rel_tol = 1e-14;
  int lie_max_terms = 40;
  double d_floor = 1e-3;
  bool enforce_theory = false;
};

StepResult normalization_step(const HamiltonianDecomposition& H, const StructureMatrix& S,
                              const IterationParams& u, const FrequencyData& freq,
                              const ConstantsLedger& constants, int j,
                              const StepOptions& options = {});

/// max(‖A‖, Σ_i ‖B_i‖) at σ.
double measure_eps(const HamiltonianDecomposition& H, double sigma);

enum class RunStatus { converged, max_steps, refused, diverged };
const char* to_string(RunStatus status) noexcept;

struct NormalizationTrace {
  ConstantsLedger constants;
  FrequencyData freq;
  IterationParams u0;
  bool empirical_mode = false;
  std::vector<std::string> warnings;
  std::vector<StepRecord> steps;
  std::vector<double> eps;  // ε_0, ε_1, … measured
  RunStatus status = RunStatus::max_steps;
  std::string message;
};

struct RunResult {
  NormalizationTrace trace;
  HamiltonianDecomposition normal_form;
  std::vector<Series> chi_list;
  StructureMatrix structure;  // shifted
  std::vector<IterationParams> params;  // u_j used for χ_j
};

RunResult run(const Problem& problem, int max_steps, double target_eps);

/// Composition of the Lie maps of a run. forward maps normalized
/// coordinates to original (shifted) ones by applying the maps in reverse
/// order; inverse applies exp(𝓛_{-χ_j}) in forward order.
class ComposedMap {
 public:
  ComposedMap(const std::vector<Series>& chi_list, const StructureMatrix& S,
              const std::vector<IterationParams>& params, const LieOptions& options = {});

  ExtendedPoint forward(const ExtendedPoint& p) const;
  ExtendedPoint inverse(const ExtendedPoint& p) const;
  std::size_t size() const { return maps_.size(); }

 private:
  std::vector<LieCoordinateMap> maps_;
  std::vector<LieCoordinateMap> inverse_maps_;
};

ExtendedPoint compose_map(const std::vector<Series>& chi_list, const ExtendedPoint& point,
                          const StructureMatrix& S);

}  // namespace poisson_kam
