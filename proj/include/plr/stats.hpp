#pragma once

// Distribution helpers and sample-vs-reference distances.

#include "plr/rng.hpp"

#include <functional>
#include <span>
#include <vector>

namespace plr::stats {

double normal_cdf(double z);
double normal_quantile(double p);

double mean(std::span<const double> xs);
/// Unbiased sample variance.
double variance(std::span<const double> xs);
/// Type-7 (linear interpolation) empirical quantile.
double quantile(std::span<const double> xs, double q);

/// One-sample Kolmogorov-Smirnov statistic sup |F_n - F|.
double ks_statistic(std::span<const double> xs, const std::function<double(double)>& cdf);
double ks_statistic_normal(std::span<const double> xs, double mu, double sd);
double ks_two_sample(std::span<const double> a, std::span<const double> b);

/// Asymptotic p-value of the one-sample KS statistic (Stephens' small-sample
/// correction of the Kolmogorov limit law).
double ks_pvalue(double d, std::size_t n);
/// Kolmogorov limit survival function P(K > lambda).
double kolmogorov_survival(double lambda);

/// W1 between the empirical law of xs and N(mu, sd^2), approximated by the
/// average gap between order statistics and reference quantiles at (i-1/2)/N.
double wasserstein1_normal(std::span<const double> xs, double mu, double sd);
/// Exact W1 between two empirical laws (integral of |F_a - F_b|).
double wasserstein1_two_sample(std::span<const double> a, std::span<const double> b);

/// N(mu, sd^2) restricted to [lo, hi] by inverse-CDF.
double sample_truncated_normal(double mu, double sd, double lo, double hi, Rng& rng);
double truncated_normal_cdf(double x, double mu, double sd, double lo, double hi);

/// Gamma(shape, rate) restricted to [lo, hi] by inverse-CDF.
double sample_truncated_gamma(double shape, double rate, double lo, double hi, Rng& rng);
double truncated_gamma_cdf(double x, double shape, double rate, double lo, double hi);
double gamma_log_density(double x, double shape, double rate);

/// Effective sample size from the initial positive sequence estimator.
double effective_sample_size(std::span<const double> chain);
/// Potential scale reduction over equally long chains.
double potential_scale_reduction(const std::vector<std::vector<double>>& chains);
/// Split-chain PSRF of a single chain (first half vs second half).
double split_psrf(std::span<const double> chain);

}  // namespace plr::stats
