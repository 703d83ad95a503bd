#pragma once

// Numerical flow of the extended Poisson system
//   ẏ = B12 H_x,  ẋ = -B12ᵀ H_y + B22 H_x,  η̇ = -H_ξ,  ξ̇ = H_η,
// and the torus checks built on it.

#include <vector>

#include "poisson_kam/bracket.hpp"
#include "poisson_kam/ftseries.hpp"
#include "poisson_kam/kolmogorov.hpp"

namespace poisson_kam {

struct TrajectorySample {
  double t = 0.0;
  ExtendedPoint point;
  double torus_error = 0.0;          // |y|
  std::vector<double> phase_drift;   // x(t) - x(0) - ωt wrapped to (-π, π]
};

/// Dormand–Prince 5(4) with absolute and relative tolerance `tol`, one sample
/// per accepted step plus the exact end point. Only real parts of `start` are
/// used. `omega` (length n, or empty for zero) enters the phase drift only.
/// Throws stiffness when the step size underflows.
std::vector<TrajectorySample> integrate(const Series& H, const StructureMatrix& S,
                                        const ExtendedPoint& start, double t_end, double tol,
                                        const std::vector<double>& omega = {});

/// End point only, for oracles.
ExtendedPoint flow(const Series& H, const StructureMatrix& S, const ExtendedPoint& start,
                   double t_end, double tol);

double wrap_angle(double angle);

struct TorusOrbit {
  double x0 = 0.0;                 // initial angle of the first component
  double naive_error = 0.0;        // sup_t |y'| from the un-transformed point
  double mapped_error = 0.0;       // sup_t |y'| from the mapped torus point
  double naive_action_end = 0.0;   // |y(t_end)| in original coordinates
  double mapped_action_end = 0.0;
  double naive_drift = 0.0;        // sup_t |phase drift| in normalized angles
  double mapped_drift = 0.0;
};

struct TorusReport {
  std::vector<TorusOrbit> orbits;
  double naive_error = 0.0;  // sup over orbits
  double mapped_error = 0.0;
  double naive_action_end = 0.0;
  double mapped_action_end = 0.0;
  double naive_drift = 0.0;
  double mapped_drift = 0.0;
  double improvement = 0.0;         // naive_error / mapped_error, ∞ when both vanish
  double action_improvement = 0.0;  // naive_action_end / mapped_action_end
  std::vector<TrajectorySample> naive_trajectory;   // first angle, normalized-coordinate metrics
  std::vector<TrajectorySample> mapped_trajectory;
};

/// Integrates the original system from the naive point (y = 0, x₀) and from
/// the image of the torus point (y' = 0, x₀) under the composed map, and
/// measures both in normalized coordinates. Angles x₀ = 2πi/angles, other
/// components offset by the golden ratio.
TorusReport torus_persistence_report(const Problem& problem, const std::vector<Series>& chi_list,
                                     const std::vector<IterationParams>& params, double t_end,
                                     double tol, int angles = 8);

/// Largest coordinate difference between exp(𝓛_χ) applied to `point` and the
/// time-1 flow of -χ.
double lie_vs_flow_check(const Series& chi, const StructureMatrix& S, const ExtendedPoint& point,
                         double tol);

}  // namespace poisson_kam
