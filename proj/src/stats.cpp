#include "plr/stats.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace plr::stats {

namespace {

std::vector<double> sorted_copy(std::span<const double> xs) {
  std::vector<double> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end());
  return v;
}

// Exponential-proposal rejection for N(0,1) restricted to [a, b] with a > 0
// far in the tail.
double tail_normal(double a, double b, Rng& rng) {
  const double alpha = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double z = a - std::log(uniform01(rng)) / alpha;
    if (z > b) continue;
    const double rho = std::exp(-0.5 * (z - alpha) * (z - alpha));
    if (uniform01(rng) <= rho) return z;
  }
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

double mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean of empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double variance(std::span<const double> xs) {
  if (xs.size() < 2) throw std::invalid_argument("variance needs two values");
  const double mu = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - mu) * (x - mu);
  return ss / static_cast<double>(xs.size() - 1);
}

double quantile(std::span<const double> xs, double q) {
  if (xs.empty()) throw std::invalid_argument("quantile of empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::domain_error("quantile level outside [0, 1]");
  const auto v = sorted_copy(xs);
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double ks_statistic(std::span<const double> xs, const std::function<double(double)>& cdf) {
  if (xs.empty()) throw std::invalid_argument("KS statistic of empty sample");
  const auto v = sorted_copy(xs);
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = cdf(v[i]);
    const double di = static_cast<double>(i);
    d = std::max({d, (di + 1.0) / n - f, f - di / n});
  }
  return d;
}

double ks_statistic_normal(std::span<const double> xs, double mu, double sd) {
  if (!(sd > 0.0)) throw std::invalid_argument("reference sd must be positive");
  return ks_statistic(xs, [=](double x) { return normal_cdf((x - mu) / sd); });
}

double ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("KS statistic of empty sample");
  const auto va = sorted_copy(a);
  const auto vb = sorted_copy(b);
  const double na = static_cast<double>(va.size());
  const double nb = static_cast<double>(vb.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < va.size() && j < vb.size()) {
    const double t = std::min(va[i], vb[j]);
    while (i < va.size() && va[i] <= t) ++i;
    while (j < vb.size() && vb[j] <= t) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_pvalue(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  return kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d);
}

double wasserstein1_normal(std::span<const double> xs, double mu, double sd) {
  if (xs.empty()) throw std::invalid_argument("W1 of empty sample");
  const auto v = sorted_copy(xs);
  const double n = static_cast<double>(v.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double q = mu + sd * normal_quantile((static_cast<double>(i) + 0.5) / n);
    acc += std::abs(v[i] - q);
  }
  return acc / n;
}

double wasserstein1_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("W1 of empty sample");
  const auto va = sorted_copy(a);
  const auto vb = sorted_copy(b);
  std::vector<double> all(va);
  all.insert(all.end(), vb.begin(), vb.end());
  std::sort(all.begin(), all.end());
  const double na = static_cast<double>(va.size());
  const double nb = static_cast<double>(vb.size());
  double acc = 0.0;
  std::size_t i = 0, j = 0;
  for (std::size_t k = 0; k + 1 < all.size(); ++k) {
    while (i < va.size() && va[i] <= all[k]) ++i;
    while (j < vb.size() && vb[j] <= all[k]) ++j;
    acc += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) *
           (all[k + 1] - all[k]);
  }
  return acc;
}

double sample_truncated_normal(double mu, double sd, double lo, double hi, Rng& rng) {
  if (!(sd > 0.0)) throw std::invalid_argument("truncated normal: sd must be positive");
  if (!(lo < hi)) throw std::invalid_argument("truncated normal: empty interval");
  double a = (lo - mu) / sd;
  double b = (hi - mu) / sd;
  bool flipped = false;
  if (a > 0.0) {  // work in the lower half where Phi keeps precision
    std::swap(a, b);
    a = -a;
    b = -b;
    flipped = true;
  }
  double z;
  if (b < -8.0) {
    z = -tail_normal(-b, -a, rng);
  } else {
    const double pa = normal_cdf(a);
    const double pb = normal_cdf(b);
    double u = pa + (pb - pa) * uniform01(rng);
    u = std::clamp(u, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
    z = std::clamp(normal_quantile(u), a, b);
  }
  if (flipped) z = -z;
  return mu + sd * z;
}

double truncated_normal_cdf(double x, double mu, double sd, double lo, double hi) {
  if (x <= lo) return 0.0;
  if (x >= hi) return 1.0;
  const double pa = normal_cdf((lo - mu) / sd);
  const double pb = normal_cdf((hi - mu) / sd);
  return (normal_cdf((x - mu) / sd) - pa) / (pb - pa);
}

double sample_truncated_gamma(double shape, double rate, double lo, double hi, Rng& rng) {
  if (!(shape > 0.0 && rate > 0.0)) throw std::invalid_argument("truncated gamma: bad parameters");
  if (!(lo < hi) || lo < 0.0) throw std::invalid_argument("truncated gamma: bad interval");
  const double pa = boost::math::gamma_p(shape, rate * lo);
  const double pb = boost::math::gamma_p(shape, rate * hi);
  if (pb - pa > 1e-12) {
    const double u = pa + (pb - pa) * uniform01(rng);
    if (u > 0.0 && u < 1.0)
      return std::clamp(boost::math::gamma_p_inv(shape, u) / rate, lo, hi);
  }
  // Mass numerically concentrated at one end: work with the upper tail.
  const double qa = boost::math::gamma_q(shape, rate * lo);
  const double qb = boost::math::gamma_q(shape, rate * hi);
  if (qa - qb > 0.0) {
    const double u = qb + (qa - qb) * uniform01(rng);
    return std::clamp(boost::math::gamma_q_inv(shape, u) / rate, lo, hi);
  }
  return (rate * lo > shape - 1.0) ? lo : hi;
}

double truncated_gamma_cdf(double x, double shape, double rate, double lo, double hi) {
  if (x <= lo) return 0.0;
  if (x >= hi) return 1.0;
  const double pa = boost::math::gamma_p(shape, rate * lo);
  const double pb = boost::math::gamma_p(shape, rate * hi);
  return (boost::math::gamma_p(shape, rate * x) - pa) / (pb - pa);
}

double gamma_log_density(double x, double shape, double rate) {
  if (x <= 0.0) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double effective_sample_size(std::span<const double> chain) {
  const std::size_t n = chain.size();
  if (n < 4) return static_cast<double>(n);
  const double mu = mean(chain);
  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (chain[i] - mu) * (chain[i + lag] - mu);
    return s / static_cast<double>(n);
  };
  const double c0 = autocov(0);
  if (!(c0 > 0.0)) return static_cast<double>(n);
  // Geyer: sum consecutive pairs while positive, enforcing monotonicity.
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = (autocov(2 * k) + autocov(2 * k + 1)) / c0;
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(n)));
  return static_cast<double>(n) / tau;
}

double potential_scale_reduction(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw std::invalid_argument("PSRF needs at least two chains");
  const std::size_t len = chains.front().size();
  if (len < 2) throw std::invalid_argument("PSRF needs chains of length >= 2");
  for (const auto& c : chains)
    if (c.size() != len) throw std::invalid_argument("PSRF chains must be equally long");
  const double m = static_cast<double>(chains.size());
  const double n = static_cast<double>(len);
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean(c));
    vars.push_back(variance(c));
  }
  const double w = mean(vars);
  const double b = n * variance(means);
  (void)m;
  if (!(w > 0.0)) return 1.0;
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

double split_psrf(std::span<const double> chain) {
  const std::size_t half = chain.size() / 2;
  if (half < 2) throw std::invalid_argument("split PSRF needs at least 4 draws");
  std::vector<std::vector<double>> parts{
      std::vector<double>(chain.begin(), chain.begin() + static_cast<std::ptrdiff_t>(half)),
      std::vector<double>(chain.end() - static_cast<std::ptrdiff_t>(half), chain.end())};
  return potential_scale_reduction(parts);
}

}  // namespace plr::stats
