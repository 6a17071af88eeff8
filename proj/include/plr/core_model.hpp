#pragma once

// Partially linear model Y = X'b + eta(W) + U in the partialled-out form
// Y = m1(W) + (X - m2(W))'b + U, together with the Gaussian working
// (quasi-)likelihood for (Y, X) given W and its score / information.

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <vector>

namespace plr {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Observed sample {(y_i, x_i, w_i)}. Rows of x and w are observations.
struct Dataset {
  Vec y;
  Mat x;  // n x d_x
  Mat w;  // n x d_w, entries in [0, 1]

  Index n() const { return y.size(); }
  Index dx() const { return x.cols(); }
  Index dw() const { return w.cols(); }

  /// Throws std::invalid_argument on shape mismatch, n < 2, non-finite
  /// entries or controls outside the unit cube.
  void validate() const;
};

struct ModelConfig {
  double sigma01_sq = 1.0;  // outcome residual variance (known-variance mode)
  double sigma02_sq = 1.0;  // variance of the X-equation; Sigma02 = sigma02_sq * I
  bool variance_known = true;
  double xi_lower = 0.01;   // precision support used when the variance is unknown
  double xi_upper = 100.0;
  double beta_bound = 10.0; // B, the box [-B, B]^d_x

  void validate() const;
};

/// m = (m1, m2) represented by its values at the design points.
struct NuisanceValues {
  Vec m1;  // n
  Mat m2;  // n x d_x

  void check_conforms(const Dataset& data) const;
};

struct ThetaState {
  Vec beta;
  double xi = 1.0;
};

/// Precision actually used by the likelihood: 1/sigma01_sq when the variance
/// is known, theta.xi otherwise.
double effective_xi(const ThetaState& theta, const ModelConfig& config);

/// Covariance V(b) of (Y, X) given W for scalar X.
Eigen::Matrix2d cov_matrix(double beta, const ModelConfig& config);

/// m01 = eta0 + m02 * beta0, pointwise.
Vec robinson_decompose(const Vec& eta0, const Vec& beta0, const Mat& m02);

/// Inverse of robinson_decompose: eta = m1 - m2 * beta.
Vec recover_eta(const Vec& m1, const Vec& beta, const Mat& m2);

/// Residuals r_i = y_i - m1(w_i) - (x_i - m2(w_i))'beta.
Vec outcome_residuals(const Dataset& data, const Vec& beta, const NuisanceValues& m);

/// Log quasi-likelihood in factorized form
///   sum_i log N(y_i; m1 + (x_i - m2)'b, 1/xi) + log N(x_i; m2, sigma02_sq I).
double log_quasi_likelihood(const Dataset& data, const ThetaState& theta,
                            const NuisanceValues& m, const ModelConfig& config);

/// Gradient of the log quasi-likelihood in b (length d_x), followed by the
/// derivative in xi when the variance is unknown (length d_x + 1).
Vec score(const Dataset& data, const ThetaState& theta, const NuisanceValues& m,
          const ModelConfig& config);

/// -(1/n) times the Hessian of the log quasi-likelihood in (b[, xi]).
Mat information(const Dataset& data, const ThetaState& theta, const NuisanceValues& m,
                const ModelConfig& config);

// ---------------------------------------------------------------------------
// Population objective on a finitely supported law of (Y, X, W).

struct PopulationAtom {
  Index w_index = 0;  // which support point of W
  double y = 0.0;
  Vec x;
  double prob = 0.0;  // joint probability P(Y=y, X=x, W=w)
};

struct DiscretePopulation {
  Index n_w = 0;
  std::vector<PopulationAtom> atoms;

  Vec w_marginal() const;
  void validate() const;
};

/// -E[log p_{b,m}(Y, X | W)] under the population law. Differs from the
/// expected Kullback-Leibler divergence by the constant E[log p0].
/// m is given on the W support points (n_w rows).
double kl_objective(const DiscretePopulation& pop, const Vec& beta, const NuisanceValues& m,
                    const ModelConfig& config);

struct PopulationTruth {
  Vec beta0;
  NuisanceValues m0;
};

/// Conditional means E[Y|W], E[X|W] and the partialled-out regression
/// coefficient of Y on X.
PopulationTruth population_truth(const DiscretePopulation& pop);

}  // namespace plr
