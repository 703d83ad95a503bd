#pragma once

// Extended Poisson bracket on (y, x, η, ξ) with block structure matrix
//
//         ⎛ 0      B12   0  0 ⎞
//   𝓑  =  ⎜ -B12ᵀ  B22   0  0 ⎟     B22 = -B22ᵀ, blocks depend on y only,
//         ⎜ 0      0     0 -1 ⎟
//         ⎝ 0      0     1  0 ⎠
//
//   {F,G} = F_y·B12 G_x - F_x·B12ᵀ G_y + F_x·B22 G_x + F_ξ G_η - F_η G_ξ.

#include <vector>

#include "poisson_kam/ftseries.hpp"

namespace poisson_kam {

struct ExtendedPoint {
  std::vector<cplx> y;
  std::vector<cplx> x;
  cplx eta = 0.0;
  cplx xi = 0.0;
};

class StructureMatrix {
 public:
  /// B12 is m×n, B22 is n×n; entries must be series in y only. B0 and B1 are
  /// evaluated at y_star.
  StructureMatrix(SeriesMatrix B12, SeriesMatrix B22, std::vector<double> y_star);

  /// Constant canonical blocks B12 = -I (m = n), B22 = 0, y* = 0.
  static StructureMatrix canonical(const SpacePtr& space);

  /// The same bracket written in y' = y - y*; the result has y_star = 0.
  StructureMatrix shifted() const;

  int m() const { return m_; }
  int n() const { return n_; }
  const SpacePtr& space() const { return space_; }
  const SeriesMatrix& B12() const { return B12_; }
  const SeriesMatrix& B22() const { return B22_; }
  const std::vector<double>& y_star() const { return y_star_; }

  /// 𝓑⁰ = -B12ᵀ(y*), n×m row-major.
  double B0(int l, int i) const { return B0_[static_cast<std::size_t>(l * m_ + i)]; }
  /// 𝓑¹_{lij} = -∂_{y_j} B12_{il}(y*).
  double B1(int l, int i, int j) const {
    return B1_[static_cast<std::size_t>((l * m_ + i) * m_ + j)];
  }

  bool has_B22() const { return has_B22_; }
  /// True when every block entry is a constant.
  bool constant_blocks() const;

 private:
  int m_;
  int n_;
  SpacePtr space_;
  SeriesMatrix B12_;
  SeriesMatrix B22_;
  std::vector<double> y_star_;
  std::vector<double> B0_;
  std::vector<double> B1_;
  bool has_B22_ = false;
};

Series poisson_bracket(const Series& F, const Series& G, const StructureMatrix& S);
inline Series lie_derivative(const Series& chi, const Series& F, const StructureMatrix& S) {
  return poisson_bracket(chi, F, S);
}

/// 𝓛_χ y_i = -(χ_x B12ᵀ)_i.
SeriesVector lie_derivative_y(const Series& chi, const StructureMatrix& S);
/// 𝓛_χ x_l = Σ_i χ_{y_i} B12_{il} + Σ_k χ_{x_k} B22_{kl}. The angles are not
/// series themselves, but their brackets are.
SeriesVector lie_derivative_x(const Series& chi, const StructureMatrix& S);

/// {F,{G,H}} + {G,{H,F}} + {H,{F,G}}.
Series jacobi_sum(const Series& F, const Series& G, const Series& H, const StructureMatrix& S);

// ---------------------------------------------------------------------------
// Γ and Lie transforms

struct BlockNorms {
  double G11 = 0.0;
  double G12 = 0.0;
  double G22 = 0.0;
};

/// G_ij = (rows·cols)·max majorant of the block entries at radius ρ. The
/// action-action block of 𝓑 is zero, so G11 = 0.
BlockNorms block_norms(const StructureMatrix& S, double rho);

/// [e²G11σ² + 2eG12ρσ + G22ρ²](eρσ)^{-2}.
double gamma_formula(const BlockNorms& G, double rho, double sigma);
double gamma_rho_sigma(const StructureMatrix& S, const WeightedNormParams& params);

struct LieOptions {
  double rel_tol = 1e-14;
  int max_terms = 40;
  /// Refuse with divergence_risk when 𝔏 > 1/2.
  bool enforce_contraction = true;
};

struct LieDiagnostics {
  double contraction = 0.0;  // 𝔏 = 4e²Γ‖χ‖/d̃²
  double gamma = 0.0;
  double chi_norm = 0.0;
  int terms = 0;             // highest power s actually added
  double last_term_norm = 0.0;
  double tail_bound = 0.0;   // last_term_norm·𝔏/(1-𝔏), ∞ when 𝔏 ≥ 1
};

/// Contraction factor 𝔏 of the Lie series at (ρ,σ) with margin d̃.
double lie_contraction(const Series& chi, const StructureMatrix& S,
                       const WeightedNormParams& params, double d_tilde, double* gamma_out = nullptr,
                       double* chi_norm_out = nullptr);

/// exp(𝓛_χ)F = Σ_s 𝓛_χˢF/s!, stopped once a term's majorant drops below
/// rel_tol times the running sum's majorant.
Series lie_transform(const Series& chi, const Series& F, const StructureMatrix& S,
                     const WeightedNormParams& params, double d_tilde,
                     LieDiagnostics* diagnostics = nullptr, const LieOptions& options = {});

/// exp(𝓛_χ) applied to the coordinate functions, kept as displacement
/// series: y ↦ y + dy(y,x,ξ), x ↦ x + dx, η ↦ η + deta, ξ ↦ ξ.
struct LieCoordinateMap {
  SeriesVector dy;
  SeriesVector dx;
  Series deta;

  ExtendedPoint apply(const ExtendedPoint& p) const;
};

LieCoordinateMap lie_coordinate_map(const Series& chi, const StructureMatrix& S,
                                    const WeightedNormParams& params,
                                    const LieOptions& options = {});

}  // namespace poisson_kam
