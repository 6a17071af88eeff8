#pragma once

// Nuisance priors: Matern Gaussian processes restricted to the design points,
// uniform series priors on a hierarchical hat basis, and a per-point discrete
// grid prior used for exact enumeration checks.

#include "plr/core_model.hpp"
#include "plr/rng.hpp"

#include <span>
#include <string>
#include <variant>
#include <vector>

namespace plr {

// ---------------------------------------------------------------------------
// Hierarchical hat basis on [0, 1].
//
// Level 0 holds the constant scaling function psi_00 = 1. A level l >= 1
// holds 2^l hats psi_lk supported on [k 2^-l, (k+1) 2^-l], peaking at the
// midpoint with height 2^(l/2) and vanishing at both endpoints. Coefficients
// of a truncated series are stored level by level; (l, k) lives at index
// 2^l - 1 + k.

/// Value of psi_lk at w. Throws std::out_of_range unless 0 <= k < 2^l.
double basis_eval(int level, long shift, double w);

inline std::size_t coeff_index(int level, long shift) {
  return (std::size_t{1} << level) - 1 + static_cast<std::size_t>(shift);
}

inline std::size_t coeff_count(int max_level) {
  return (std::size_t{2} << max_level) - 1;
}

struct SeriesFunction {
  int max_level = 0;
  std::vector<double> coeffs;  // coeff_count(max_level) entries

  double operator()(double w) const;
  /// Evaluate at each entry of w.
  Vec eval(const Vec& w) const;
};

/// Sum of c_lk psi_lk(w) over the stored truncation.
double series_eval(const SeriesFunction& f, double w);

/// sup_l max_k 2^{l(alpha + 1/2)} |c_lk|.
double weighted_sup_norm(const SeriesFunction& f, double alpha);

// ---------------------------------------------------------------------------
// Prior specifications.

struct MaternSpec {
  double alpha = 1.0;        // regularity
  double lengthscale = 1.0;
  double amplitude = 1.0;
  double jitter = 1e-8;

  void validate() const;
};

struct WaveletPriorSpec {
  double alpha0 = 1.0;
  double M = 1.0;
  int max_level = -1;  // < 0 selects ceil(log2 n) at the design size

  /// Throws on non-positive alpha0/M; returns false (warning path) when
  /// alpha0 <= 1/2.
  bool validate() const;
  int resolved_level(Index n) const;
  /// Half-width M 2^{-l(alpha0 + 1/2)} of the support of c_lk.
  double support_bound(int level) const;
};

/// Independent prior on each m(w_i) that is uniform over a finite grid.
struct GridPriorSpec {
  std::vector<double> values;
};

using NuisancePrior = std::variant<MaternSpec, WaveletPriorSpec, GridPriorSpec>;

struct NuisancePriors {
  NuisancePrior m1 = MaternSpec{};
  NuisancePrior m2 = MaternSpec{};  // shared by every coordinate of m2
};

std::string prior_name(const NuisancePrior& p);

// ---------------------------------------------------------------------------
// Matern kernel.

/// Covariance
///   amplitude * integral over R^d of exp(-i l'h) (1 + |l|^2)^(-alpha - d/2) dl
/// at h = (ws - wt) / lengthscale, evaluated in closed form through the
/// modified Bessel function K_alpha.
double matern_kernel(std::span<const double> ws, std::span<const double> wt,
                     const MaternSpec& spec);
double matern_kernel_radial(double r, int dw, const MaternSpec& spec);

struct GramFactor {
  Mat gram;           // kernel matrix at the design points
  Mat chol;           // lower factor of gram + jitter * I
  double jitter = 0;  // jitter actually used
  int escalations = 0;
  std::vector<double> jitter_ladder;  // every jitter tried, in order
  double min_pivot = 0;  // smallest LDL^T pivot of the un-jittered gram
  bool unjittered_ok = false;  // plain Cholesky of gram succeeded

  // Eigendecomposition gram = Q diag(lambda) Q' (lambda clipped at 0); used
  // by the conjugate Gibbs blocks for noise levels that change per sweep.
  Mat eigvecs;
  Vec eigvals;
};

/// Gram matrix and Cholesky factor. Jitter escalates by factors of 10 from
/// spec.jitter up to 1e-4; throws
/// std::runtime_error when even the last rung fails.
GramFactor gram_and_factor(const Mat& points, const MaternSpec& spec);

/// chol * z for z ~ N(0, I).
Vec sample_gp(const GramFactor& factor, Rng& rng);

// ---------------------------------------------------------------------------
// Uniform series prior.

/// c_lk = 2^{-l(alpha0 + 1/2)} u_lk, u_lk ~ Uniform[-M, M], levels 0..max_level.
SeriesFunction sample_wavelet_prior(const WaveletPriorSpec& spec, int max_level, Rng& rng);
SeriesFunction sample_wavelet_prior(const WaveletPriorSpec& spec, Rng& rng);

/// Draw of the nuisance values at the design points under any prior.
Vec sample_prior_values(const NuisancePrior& prior, const Mat& points, Rng& rng);

}  // namespace plr
