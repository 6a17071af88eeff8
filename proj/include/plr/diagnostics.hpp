#pragma once

// Posterior-vs-Gaussian distances, coverage and contraction studies, the
// multiplier empirical processes and the two-parametrization comparison.

#include "plr/dgp.hpp"
#include "plr/frequentist.hpp"
#include "plr/samplers.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace plr {

inline constexpr const char* kTvProxyNote =
    "total variation to the Gaussian limit is not estimable from draws without smoothing; "
    "KS and Wasserstein-1 are reported as proxies";

inline const std::vector<double> kGapQuantiles{0.05, 0.25, 0.5, 0.75, 0.95};

struct BvmReport {
  Index n = 0;
  Index draws = 0;
  std::vector<double> ks;            // per b coordinate
  std::vector<double> wasserstein1;  // per b coordinate, units of b
  std::vector<std::map<double, double>> quantile_gaps;  // |c_n(q) - ref_q| / sd
  // KS of Mahalanobis distances against chi-square(dim); set when the
  // reference has more than one coordinate.
  double chi2_ks = -1.0;
  int chi2_dim = 0;
  std::string tv_proxy_note = kTvProxyNote;

  double max_ks() const;
  double median_gap(Index j = 0) const { return quantile_gaps.at(static_cast<std::size_t>(j)).at(0.5); }
};

/// Throws std::invalid_argument with fewer than min_draws retained draws.
BvmReport bvm_distance(const PosteriorDraws& draws, const GaussianReference& ref,
                       Index min_draws = 500);

/// Everything needed to simulate a dataset and run one chain on it.
struct StudySpec {
  DgpSpec dgp;
  TrueFunctions truth;
  ModelConfig model;
  SamplerId sampler = SamplerId::beta_m;
  SamplerSetup setup;
  ChainConfig chain;
};

struct ReplicationOutcome {
  std::size_t index = 0;
  bool ok = false;
  std::string error;
  double lower = 0, upper = 0;
  double post_mean = 0, post_sd = 0;
  bool covered = false;
};

struct CoverageReport {
  std::string sampler;
  Index n = 0;
  long replications = 0;
  long failures = 0;
  double nominal = 0.9;
  double empirical = 0.0;  // over successful replications
  double mc_se = 0.0;      // sqrt(p (1 - p) / R)
  double avg_width = 0.0;
  double bias = 0.0;          // mean posterior mean minus b0 (first coordinate)
  double mean_post_sd = 0.0;
  double bias_sd_ratio = 0.0;
  std::vector<ReplicationOutcome> outcomes;  // sorted by replication index
};

/// Seeds for replication r under master seed s.
std::uint64_t replication_stream(std::uint64_t master, std::uint64_t r);

/// Credible intervals for the first coordinate of b over `reps` fresh datasets.
/// Requires reps >= 50 unless allow_small is set (unit tests).
CoverageReport coverage_experiment(const StudySpec& spec, long reps, double level,
                                   std::uint64_t master_seed, unsigned threads,
                                   bool allow_small = false);

struct ContractionReport {
  std::vector<Index> n_grid;
  std::vector<double> risk;  // max of the two terms below
  std::vector<double> risk_m1;
  std::vector<double> risk_m2;
  double slope = 0.0;
  int inversions = 0;
  bool slope_ok = false;  // slope <= -1/4 + 0.05
};

/// Posterior expected empirical L2 distance of (m1, m2) to the truth at each n,
/// with `reps` datasets averaged per grid point. Uses the (b, m) sampler.
ContractionReport contraction_curve(const StudySpec& spec, const std::vector<Index>& n_grid,
                                    std::uint64_t master_seed, unsigned threads, int reps = 1);

/// Empirical L2 norm over design points.
double empirical_l2(const Vec& f);

/// n^{-1/2} sum eps2_i (m1 - m01)(w_i); one entry per coordinate of X.
Vec multiplier_g1(const Mat& eps2, const Vec& m1, const Vec& m01);
/// n^{-1/2} sum [U_i d2_i - eps2_i (d2_i' b0)] with d2 = m2 - m02.
Vec multiplier_g2(const Vec& u, const Mat& eps2, const Vec& beta0, const Mat& m2, const Mat& m02);

struct EmpiricalProcessReport {
  Index n = 0;
  Index draws = 0;
  double sup_g1 = 0.0;
  double sup_g2 = 0.0;
};

/// Sups over the stored nuisance draws (store_nuisance must have been on).
EmpiricalProcessReport empirical_process_check(const PosteriorDraws& draws, const Dataset& data,
                                               const TrueFunctions& truth);

struct Regime {
  std::string name;
  StudySpec spec;
};

struct ComparisonCell {
  std::string regime;
  std::string sampler;
  CoverageReport coverage;
};

struct ComparisonReport {
  std::vector<ComparisonCell> cells;  // regime-major, (b, m) before (b, eta)

  const ComparisonCell& at(const std::string& regime, SamplerId sampler) const;
};

ComparisonReport compare_parametrizations(const std::vector<Regime>& regimes, long reps,
                                          double level, std::uint64_t master_seed,
                                          unsigned threads);

}  // namespace plr
