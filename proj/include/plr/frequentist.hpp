#pragma once

// Reference objects for the Bernstein-von Mises comparison: the Gaussian limit
// law at the truth, a feasible partialling-out estimator and Wald intervals.

#include "plr/core_model.hpp"
#include "plr/smoothing.hpp"

#include <utility>
#include <vector>

namespace plr {

struct TrueFunctions;

/// N(center, covariance): center = theta0 + I^{-1} score / n evaluated at the
/// truth, covariance = I^{-1} / n. In unknown-variance mode the last
/// coordinate is the precision xi.
struct GaussianReference {
  Vec center;
  Mat covariance;
  Index n = 0;

  double sd(Index j) const;
  /// center_j + Phi^{-1}(q) sd_j
  double quantile(Index j, double q) const;
};

/// Limit law evaluated at (b0, m0). Throws std::runtime_error when the
/// information matrix is singular (degenerate design).
GaussianReference oracle_reference(const Dataset& data, const TrueFunctions& truth,
                                   const ModelConfig& model);

struct RobinsonEstimate {
  Vec beta_hat;
  Mat variance;       // sigma2_hat (R_x' R_x)^{-1}
  double sigma2_hat = 0.0;
  Vec y_fit;          // smoothed E[Y|W]
  Mat x_fit;          // smoothed E[X|W]
};

/// Partialling-out: smooth y and each column of x on w, then least squares of
/// the y-residuals on the x-residuals.
RobinsonEstimate feasible_robinson(const Dataset& data, const SmootherSpec& smoother);

/// Equitailed interval center +- Phi^{-1}(1 - (1-level)/2) sd per coordinate.
std::vector<std::pair<double, double>> wald_interval(const GaussianReference& ref, double level);

}  // namespace plr
