#include "doctest.h"

#include "plr/rng.hpp"
#include "plr/stats.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>

using namespace plr;

TEST_CASE("normal cdf and quantile") {
  CHECK(stats::normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(stats::normal_quantile(0.975) == doctest::Approx(1.959963985).epsilon(1e-9));
  for (double p : {1e-10, 0.01, 0.3, 0.9})
    CHECK(stats::normal_cdf(stats::normal_quantile(p)) == doctest::Approx(p).epsilon(1e-10));
}

TEST_CASE("empirical quantile matches type 7") {
  const std::vector<double> xs{4, 1, 3, 2};
  CHECK(stats::quantile(xs, 0.0) == 1.0);
  CHECK(stats::quantile(xs, 1.0) == 4.0);
  CHECK(stats::quantile(xs, 0.5) == doctest::Approx(2.5));
  CHECK(stats::quantile(xs, 0.25) == doctest::Approx(1.75));
}

TEST_CASE("ks and wasserstein basics") {
  Rng rng(3);
  std::vector<double> xs(10000);
  for (auto& x : xs) x = std_normal(rng);
  CHECK(stats::ks_statistic_normal(xs, 0, 1) < 0.025);
  std::vector<double> shifted = xs;
  for (auto& x : shifted) x += 5.0;
  CHECK(stats::ks_statistic_normal(shifted, 0, 1) >= 0.95);
  CHECK(stats::ks_two_sample(xs, xs) == 0.0);
  CHECK(stats::wasserstein1_two_sample(xs, xs) == 0.0);
  CHECK(stats::wasserstein1_two_sample(xs, shifted) == doctest::Approx(5.0));
  // affine invariance of KS
  std::vector<double> scaled = xs;
  for (auto& x : scaled) x = 3.0 * x - 2.0;
  CHECK(stats::ks_statistic_normal(scaled, -2.0, 3.0) == doctest::Approx(stats::ks_statistic_normal(xs, 0, 1)).epsilon(1e-12));
  CHECK(stats::wasserstein1_normal(xs, 0, 1) < 0.03);
}

TEST_CASE("ks p-value") {
  CHECK(stats::kolmogorov_survival(0.0) == 1.0);
  CHECK(stats::kolmogorov_survival(1.36) == doctest::Approx(0.05).epsilon(0.02));
  CHECK(stats::kolmogorov_survival(1.95) == doctest::Approx(0.001).epsilon(0.1));
  CHECK(stats::ks_pvalue(0.001, 1000) > 0.99);
}

TEST_CASE("truncated normal sampler") {
  Rng rng(9);
  for (auto [lo, hi] : std::vector<std::pair<double, double>>{{-1, 2}, {3, 4}, {-12, -10}, {0.5, 40}}) {
    std::vector<double> xs(20000);
    for (auto& x : xs) {
      x = stats::sample_truncated_normal(0.0, 1.0, lo, hi, rng);
      REQUIRE(x >= lo);
      REQUIRE(x <= hi);
    }
    const double d = stats::ks_statistic(xs, [&](double v) { return stats::truncated_normal_cdf(v, 0, 1, lo, hi); });
    CHECK(stats::ks_pvalue(d, xs.size()) > 1e-3);
  }
}

TEST_CASE("truncated gamma sampler") {
  Rng rng(10);
  std::vector<double> xs(20000);
  for (auto& x : xs) x = stats::sample_truncated_gamma(5.0, 2.0, 1.0, 3.0, rng);
  const double d = stats::ks_statistic(xs, [&](double v) { return stats::truncated_gamma_cdf(v, 5.0, 2.0, 1.0, 3.0); });
  CHECK(stats::ks_pvalue(d, xs.size()) > 1e-3);
  CHECK(stats::gamma_log_density(1.5, 3.0, 2.0) ==
        doctest::Approx(std::log(boost::math::gamma_p_derivative(3.0, 3.0) * 2.0)).epsilon(1e-12));
}

TEST_CASE("ess and psrf") {
  Rng rng(12);
  std::vector<double> iid(5000);
  for (auto& x : iid) x = std_normal(rng);
  CHECK(stats::effective_sample_size(iid) == doctest::Approx(5000).epsilon(0.15));
  std::vector<double> ar(5000);
  double prev = 0;
  for (auto& x : ar) prev = x = 0.9 * prev + std_normal(rng);
  // AR(1) with rho = 0.9: ESS ~ N (1 - rho) / (1 + rho)
  CHECK(stats::effective_sample_size(ar) == doctest::Approx(5000 * 0.1 / 1.9).epsilon(0.35));
  CHECK(stats::split_psrf(iid) < 1.01);
  std::vector<double> a(1000), b(1000);
  for (auto& x : a) x = std_normal(rng);
  for (auto& x : b) x = 3.0 + std_normal(rng);
  CHECK(stats::potential_scale_reduction({a, b}) > 1.5);
}

TEST_CASE("seed splitting") {
  CHECK(hash64(1, 0) != hash64(1, 1));
  CHECK(hash64(1, 0) != hash64(2, 0));
  CHECK(hash64(7, 3) == hash64(7, 3));
}
