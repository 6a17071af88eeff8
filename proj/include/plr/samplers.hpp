#pragma once

// MCMC for the partially linear model.
//
// gibbs_beta_m cycles through the blocks
//   m1 | b, m2, xi    Gaussian regression of y - (x - m2)'b on W, noise 1/xi
//   m2 | b, m1, xi    per coordinate, Gaussian regression on W of the
//                     conditional mean of x given y (noise from the bivariate
//                     factorization)
//   b  | m, xi        conjugate linear regression of y - m1 on x - m2
//   xi | b, m         Metropolis-Hastings, unknown-variance mode only
// gibbs_beta_eta runs the classical two-block scheme for y = x'b + eta(W) + U.

#include "plr/core_model.hpp"
#include "plr/frequentist.hpp"
#include "plr/priors.hpp"
#include "plr/rng.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace plr {

enum class SamplerId { beta_m, beta_eta, oracle };
enum class InitMode { prior_draw, zero, user };
enum class BetaUpdate { truncated, flat };

std::string to_string(SamplerId s);
SamplerId parse_sampler_id(const std::string& s);
std::string to_string(InitMode m);
InitMode parse_init_mode(const std::string& s);
std::string to_string(BetaUpdate b);
BetaUpdate parse_beta_update(const std::string& s);

struct ChainConfig {
  long n_iter = 3000;
  long burn_in = 1000;
  long thin = 1;
  std::uint64_t seed = 1;
  InitMode init = InitMode::prior_draw;
  BetaUpdate beta_update = BetaUpdate::truncated;
  // Shift the initial b by this many posterior-free sds (see gibbs_beta_m);
  // 0 disables. Used to start chains from overdispersed points.
  double overdispersed_offset = 0.0;
  bool store_nuisance = false;
  std::optional<ThetaState> user_theta;
  std::optional<NuisanceValues> user_m;

  void validate() const;
  long retained() const;
};

struct ChainDiagnostics {
  std::vector<double> split_psrf;  // per b coordinate
  std::vector<double> ess;
};

struct PosteriorDraws {
  Mat beta;  // retained draws x d_x
  Vec xi;    // retained draws, unknown-variance mode only
  std::vector<Vec> m1;  // kept when store_nuisance (eta for the (b, eta) sampler)
  std::vector<Mat> m2;
  Vec m1_mean;  // posterior means over the retained draws
  Mat m2_mean;
  ChainConfig meta;
  std::map<std::string, double> acceptance;
  ChainDiagnostics diagnostics;

  Index draws() const { return beta.rows(); }
  std::vector<double> beta_column(Index j) const;
};

class ChainError : public std::runtime_error {
 public:
  ChainError(long iteration, const std::string& what)
      : std::runtime_error("iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

class SliceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Single blocks. Each leaves its exact full conditional invariant.

/// Posterior draw of f(w_1..w_n) for z_i = f(w_i) + N(0, noise_var) under the
/// GP prior N(0, gram + jitter I), through the Gram eigendecomposition.
Vec draw_gp_regression(const GramFactor& factor, const Vec& z, double noise_var, Rng& rng);

/// Same for the per-point grid prior: each value drawn from its discrete
/// conditional over the grid.
Vec draw_grid_regression(const GridPriorSpec& prior, const Vec& z, double noise_var, Rng& rng);

/// Gaussian pseudo-regression z = f(W) + N(0, noise_var) defining a nuisance
/// block's full conditional.
struct PseudoRegression {
  Vec z;
  double noise_var = 1.0;
};

/// m1 | b, m2, xi: z = y - (x - m2)'b, noise 1/xi.
PseudoRegression m1_conditional(const Dataset& data, const Vec& beta, const Mat& m2, double xi);

/// Column k of m2 | b, m1, other columns, xi. With c_i the outcome residual
/// excluding the m2_k term, the precision is p = xi b_k^2 + 1/sigma02_sq and
/// z_i = (x_ik / sigma02_sq - xi b_k c_i) / p. For d_x = 1 this is
/// z = x - b sigma02^2 (y - m1) / (sigma01^2 + b^2 sigma02^2) with noise
/// sigma02^2 sigma01^2 / (sigma01^2 + b^2 sigma02^2).
PseudoRegression m2_conditional(const Dataset& data, const Vec& beta, const Vec& m1, const Mat& m2,
                                Index k, double xi, double sigma02_sq);

struct BetaBlockStats {
  long rejection_draws = 0;
  long inverse_cdf_draws = 0;
  long coordinate_draws = 0;
};

/// b | rest for r = s b + N(0, 1/xi) with a flat prior, optionally restricted
/// to [-bound, bound]^d. Truncation uses rejection when the box keeps at least
/// 10% of the Gaussian mass and coordinatewise inverse-CDF otherwise (exact
/// for d = 1, a Gibbs sweep from `current` for d > 1).
Vec draw_beta_conjugate(const Vec& r, const Mat& s, double xi, std::optional<double> bound,
                        const Vec& current, Rng& rng, BetaBlockStats* stats = nullptr);

/// xi | rest under a flat prior on [lo, hi]: independence MH with a
/// Gamma(n/2 + 1, ssr/2) proposal truncated to [lo, hi].
double draw_xi_mh(double current, double ssr, Index n, double lo, double hi, Rng& rng,
                  bool* accepted = nullptr);

/// One slice-sampling step on [lo, hi] starting from x0, with the initial
/// bracket equal to the whole interval and shrinkage towards x0. Throws
/// SliceError after max_shrink rejected proposals.
double slice_sample_bounded(double x0, double lo, double hi,
                            const std::function<double(double)>& log_density, Rng& rng,
                            int max_shrink = 100, int* shrinks = nullptr);

/// Data points inside the support of each hat, with the hat values.
struct HatDesign {
  int max_level = 0;
  std::vector<std::vector<std::pair<Index, double>>> support;  // by coeff_index

  static HatDesign build(const Vec& w, int max_level);
};

/// Slice update of c_lk given residuals e = z - fitted (fitted includes the
/// current c_lk term) for the Gaussian regression with noise_var, restricted
/// to the prior support [-M 2^{-l(alpha0+1/2)}, +M 2^{-l(alpha0+1/2)}].
double slice_update_wavelet(const SeriesFunction& coeffs, int level, long shift,
                            const HatDesign& design, const Vec& residuals, double noise_var,
                            const WaveletPriorSpec& spec, Rng& rng, int* shrinks = nullptr);

/// Draws and updates nuisance values at the design points under one prior.
class NuisanceUpdater {
 public:
  NuisanceUpdater(const NuisancePrior& prior, const Mat& w,
                  std::shared_ptr<const GramFactor> gram = nullptr);

  Vec initial_values(InitMode mode, Rng& rng);
  /// Set the current values directly (GP and grid priors).
  void set_values(const Vec& values);
  /// Draw from the conditional given pseudo-observations z with noise_var.
  const Vec& update(const Vec& z, double noise_var, Rng& rng);

  const Vec& values() const { return values_; }
  double mean_slice_shrinks() const;
  const SeriesFunction* series() const { return series_ ? &*series_ : nullptr; }
  const std::shared_ptr<const GramFactor>& gram() const { return gram_; }

 private:
  NuisancePrior prior_;
  std::shared_ptr<const GramFactor> gram_;
  std::optional<HatDesign> hats_;
  std::optional<SeriesFunction> series_;
  Vec values_;
  long slice_steps_ = 0;
  long slice_shrinks_ = 0;
};

// ---------------------------------------------------------------------------
// Full samplers.

struct SamplerSetup {
  NuisancePriors priors;                 // (b, m) sampler
  NuisancePrior eta_prior = MaternSpec{};  // (b, eta) sampler
};

PosteriorDraws gibbs_beta_m(const Dataset& data, const NuisancePriors& priors,
                            const ChainConfig& chain, const ModelConfig& model);

PosteriorDraws gibbs_beta_eta(const Dataset& data, const NuisancePrior& eta_prior,
                              const ChainConfig& chain, const ModelConfig& model);

/// Independent draws from the Gaussian limit law (used as an oracle posterior).
PosteriorDraws sample_reference(const GaussianReference& ref, const ChainConfig& chain,
                                const ModelConfig& model, Index dx);

/// Dispatches on the sampler id and fills the chain diagnostics. The oracle
/// sampler needs `reference`.
PosteriorDraws run_chain(SamplerId id, const Dataset& data, const SamplerSetup& setup,
                         const ChainConfig& chain, const ModelConfig& model,
                         const GaussianReference* reference = nullptr);

/// PSRF of b coordinate j across several chains (truncated to the shortest).
double multi_chain_psrf(const std::vector<PosteriorDraws>& chains, Index j);

}  // namespace plr
