#pragma once

// Homological equation φ_ξ + ω·∂_x φ = ψ in the exponential-decay ring:
// each mode c·e^{ik·x}y^α e^{-paξ} is divided by (i k·ω - p a).

#include <vector>

#include "poisson_kam/bracket.hpp"
#include "poisson_kam/ftseries.hpp"

namespace poisson_kam {

struct FrequencyData {
  std::vector<double> omega_tilde;
  std::vector<double> omega;  // 𝓑⁰ ω̃
  double gamma = 0.0;         // measured at k_max
  double tau = 0.0;
  int k_max = 0;

  /// Recomputes ω = 𝓑⁰ω̃ and measures γ; throws on exact resonance.
  static FrequencyData make(const StructureMatrix& S, std::vector<double> omega_tilde, double tau,
                            int k_max);
};

struct ShellDivisor {
  int shell = 0;           // |k|
  std::vector<int> k;      // worst wavevector on the shell
  double divisor = 0.0;    // |k·ω|
  double gamma_shell = 0;  // |k·ω|·|k|^τ
};

struct DiophantineTable {
  double gamma_K = 0.0;
  std::vector<ShellDivisor> shells;
};

/// Worst small divisor per shell 1 ≤ |k| ≤ k_max. Throws resonance if some
/// k·ω vanishes.
DiophantineTable diophantine_table(const std::vector<double>& omega, double tau, int k_max);
/// min over 0 < |k| ≤ k_max of |k·ω|·|k|^τ.
double diophantine_profile(const std::vector<double>& omega, double tau, int k_max);

struct HomologicalSolution {
  Series phi;
  double min_divisor = 0.0;
  double residual_norm = 0.0;  // majorant of φ_ξ + ∂_ω φ - ψ
};

/// Divisors below this abort with near_resonance.
inline constexpr double kDivisorGuard = 1e-13;

/// The residual is measured with the majorant at `params`.
HomologicalSolution solve_scalar(const Series& psi, const FrequencyData& freq, double a,
                                 const WeightedNormParams& params = {});

/// φ_ξ + ∂_ω φ evaluated as a series.
Series homological_operator(const Series& phi, const FrequencyData& freq);

/// S_ξ + S_ω + A = 0.
HomologicalSolution solve_S(const Series& A, const FrequencyData& freq, double a,
                            const WeightedNormParams& params = {});

/// E_{lj} = Σ_i 𝓑⁰_{li} C_{ij} + Σ_i 𝓑¹_{lij} ω̃_i  (n×m).
SeriesMatrix build_E(const StructureMatrix& S, const SeriesMatrix& C,
                     const std::vector<double>& omega_tilde);

/// T_{j,ξ} + ∂_ω T_j + Σ_l S_{x_l} E_{lj} + B_j = 0 for every j.
std::vector<HomologicalSolution> solve_T(const SeriesVector& B, const Series& S_gen,
                                         const SeriesMatrix& E, const FrequencyData& freq,
                                         double a, const WeightedNormParams& params = {});

}  // namespace poisson_kam
