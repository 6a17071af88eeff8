#include "plr/diagnostics.hpp"

#include "plr/parallel.hpp"
#include "plr/rng.hpp"
#include "plr/stats.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace plr {

double BvmReport::max_ks() const {
  return ks.empty() ? 0.0 : *std::max_element(ks.begin(), ks.end());
}

BvmReport bvm_distance(const PosteriorDraws& draws, const GaussianReference& ref, Index min_draws) {
  const Index t = draws.draws();
  if (t < min_draws)
    throw std::invalid_argument("bvm_distance: need at least " + std::to_string(min_draws) +
                                " retained draws, got " + std::to_string(t));
  const Index dx = draws.beta.cols();
  const Index dim = ref.center.size();
  const bool with_xi = dim == dx + 1;
  if (dim != dx && !with_xi) throw std::invalid_argument("bvm_distance: reference dimension mismatch");
  if (with_xi && draws.xi.size() != t) throw std::invalid_argument("bvm_distance: missing xi draws");

  BvmReport rep;
  rep.n = ref.n;
  rep.draws = t;
  for (Index j = 0; j < dx; ++j) {
    const auto col = draws.beta_column(j);
    const double mu = ref.center(j);
    const double sd = ref.sd(j);
    rep.ks.push_back(stats::ks_statistic_normal(col, mu, sd));
    rep.wasserstein1.push_back(stats::wasserstein1_normal(col, mu, sd));
    std::map<double, double> gaps;
    for (double q : kGapQuantiles) gaps[q] = std::abs(stats::quantile(col, q) - ref.quantile(j, q)) / sd;
    rep.quantile_gaps.push_back(std::move(gaps));
  }

  if (dim > 1) {
    Eigen::LLT<Mat> llt(ref.covariance);
    if (llt.info() != Eigen::Success) throw std::runtime_error("bvm_distance: reference covariance not PD");
    std::vector<double> d2(static_cast<std::size_t>(t));
    for (Index i = 0; i < t; ++i) {
      Vec v(dim);
      v.head(dx) = draws.beta.row(i).transpose();
      if (with_xi) v(dx) = draws.xi(i);
      const Vec z = llt.matrixL().solve(v - ref.center);
      d2[static_cast<std::size_t>(i)] = z.squaredNorm();
    }
    const double half = 0.5 * static_cast<double>(dim);
    rep.chi2_dim = static_cast<int>(dim);
    rep.chi2_ks = stats::ks_statistic(d2, [half](double x) {
      return x <= 0.0 ? 0.0 : boost::math::gamma_p(half, 0.5 * x);
    });
  }
  return rep;
}

std::uint64_t replication_stream(std::uint64_t master, std::uint64_t r) { return hash64(master, r); }

namespace {

ReplicationOutcome run_replication(const StudySpec& spec, std::size_t r, double level,
                                   std::uint64_t master) {
  ReplicationOutcome out;
  out.index = r;
  try {
    const std::uint64_t stream = replication_stream(master, r);
    DgpSpec dgp = spec.dgp;
    dgp.seed = stream;
    const Dataset data = simulate(dgp, spec.truth);
    ChainConfig chain = spec.chain;
    chain.seed = hash64(stream, 1);
    chain.store_nuisance = false;
    PosteriorDraws draws;
    if (spec.sampler == SamplerId::oracle) {
      const GaussianReference ref = oracle_reference(data, spec.truth, spec.model);
      draws = sample_reference(ref, chain, spec.model, data.dx());
    } else {
      draws = run_chain(spec.sampler, data, spec.setup, chain, spec.model);
    }
    if (draws.draws() < 2) throw std::runtime_error("too few retained draws");
    const auto col = draws.beta_column(0);
    const double alpha = 1.0 - level;
    out.lower = stats::quantile(col, 0.5 * alpha);
    out.upper = stats::quantile(col, 1.0 - 0.5 * alpha);
    out.post_mean = stats::mean(col);
    out.post_sd = std::sqrt(stats::variance(col));
    const double b0 = spec.truth.beta0(0);
    const double tol = 1e-9 * std::max(1.0, std::abs(b0));
    out.covered = out.lower - tol <= b0 && b0 <= out.upper + tol;
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

}  // namespace

CoverageReport coverage_experiment(const StudySpec& spec, long reps, double level,
                                   std::uint64_t master_seed, unsigned threads, bool allow_small) {
  if (reps < 1 || (!allow_small && reps < 50))
    throw std::invalid_argument("coverage_experiment: need at least 50 replications");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("coverage_experiment: level must lie in (0, 1)");
  spec.truth.validate();
  spec.chain.validate();

  CoverageReport rep;
  rep.sampler = to_string(spec.sampler);
  rep.n = spec.dgp.n;
  rep.replications = reps;
  rep.nominal = level;
  rep.outcomes.resize(static_cast<std::size_t>(reps));
  parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t r) {
    rep.outcomes[r] = run_replication(spec, r, level, master_seed);
  });

  long ok = 0, covered = 0;
  double width = 0, mean_sum = 0, sd_sum = 0;
  for (const auto& o : rep.outcomes) {
    if (!o.ok) {
      ++rep.failures;
      continue;
    }
    ++ok;
    covered += o.covered;
    width += o.upper - o.lower;
    mean_sum += o.post_mean;
    sd_sum += o.post_sd;
  }
  if (ok > 0) {
    const double k = static_cast<double>(ok);
    rep.empirical = static_cast<double>(covered) / k;
    rep.mc_se = std::sqrt(rep.empirical * (1.0 - rep.empirical) / k);
    rep.avg_width = width / k;
    rep.bias = mean_sum / k - spec.truth.beta0(0);
    rep.mean_post_sd = sd_sum / k;
    rep.bias_sd_ratio = rep.mean_post_sd > 0 ? rep.bias / rep.mean_post_sd : 0.0;
  }
  return rep;
}

double empirical_l2(const Vec& f) {
  return f.size() ? std::sqrt(f.squaredNorm() / static_cast<double>(f.size())) : 0.0;
}

ContractionReport contraction_curve(const StudySpec& spec, const std::vector<Index>& n_grid,
                                    std::uint64_t master_seed, unsigned threads, int reps) {
  if (n_grid.size() < 3) throw std::invalid_argument("contraction_curve: need at least 3 grid points");
  if (!std::is_sorted(n_grid.begin(), n_grid.end()) ||
      std::adjacent_find(n_grid.begin(), n_grid.end()) != n_grid.end())
    throw std::invalid_argument("contraction_curve: n_grid must be strictly ascending");
  if (reps < 1) throw std::invalid_argument("contraction_curve: reps must be positive");

  ContractionReport rep;
  rep.n_grid = n_grid;
  const std::size_t cells = n_grid.size() * static_cast<std::size_t>(reps);
  std::vector<double> r1(cells), r2(cells);
  parallel_for(cells, threads, [&](std::size_t c) {
    const std::size_t g = c / static_cast<std::size_t>(reps);
    DgpSpec dgp = spec.dgp;
    dgp.n = n_grid[g];
    dgp.seed = replication_stream(master_seed, c);
    const Dataset data = simulate(dgp, spec.truth);
    const NuisanceValues m0 = spec.truth.nuisance_values(data.w);
    ChainConfig chain = spec.chain;
    chain.seed = hash64(dgp.seed, 1);
    chain.store_nuisance = true;
    const PosteriorDraws draws = gibbs_beta_m(data, spec.setup.priors, chain, spec.model);
    double a = 0, b = 0;
    for (std::size_t t = 0; t < draws.m1.size(); ++t) {
      a += empirical_l2(draws.m1[t] - m0.m1);
      double worst = 0;
      for (Index j = 0; j < data.dx(); ++j)
        worst = std::max(worst, empirical_l2(draws.m2[t].col(j) - m0.m2.col(j)));
      b += worst;
    }
    const double k = static_cast<double>(std::max<std::size_t>(draws.m1.size(), 1));
    r1[c] = a / k;
    r2[c] = b / k;
  });

  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    double a = 0, b = 0;
    for (int r = 0; r < reps; ++r) {
      a += r1[g * static_cast<std::size_t>(reps) + static_cast<std::size_t>(r)];
      b += r2[g * static_cast<std::size_t>(reps) + static_cast<std::size_t>(r)];
    }
    rep.risk_m1.push_back(a / reps);
    rep.risk_m2.push_back(b / reps);
    rep.risk.push_back(std::max(a, b) / reps);
  }

  // least-squares slope of log risk on log n
  const std::size_t k = n_grid.size();
  double sx = 0, sy = 0;
  std::vector<double> lx(k), ly(k);
  for (std::size_t g = 0; g < k; ++g) {
    lx[g] = std::log(static_cast<double>(n_grid[g]));
    ly[g] = std::log(std::max(rep.risk[g], 1e-300));
    sx += lx[g];
    sy += ly[g];
  }
  const double mx = sx / static_cast<double>(k), my = sy / static_cast<double>(k);
  double sxy = 0, sxx = 0;
  for (std::size_t g = 0; g < k; ++g) {
    sxy += (lx[g] - mx) * (ly[g] - my);
    sxx += (lx[g] - mx) * (lx[g] - mx);
  }
  rep.slope = sxy / sxx;
  for (std::size_t g = 1; g < k; ++g) rep.inversions += rep.risk[g] > rep.risk[g - 1];
  rep.slope_ok = rep.slope <= -0.25 + 0.05;
  return rep;
}

Vec multiplier_g1(const Mat& eps2, const Vec& m1, const Vec& m01) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(m1.size()));
  return scale * (eps2.transpose() * (m1 - m01));
}

Vec multiplier_g2(const Vec& u, const Mat& eps2, const Vec& beta0, const Mat& m2, const Mat& m02) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(u.size()));
  const Mat d2 = m2 - m02;
  const Vec proj = d2 * beta0;
  return scale * (d2.transpose() * u - eps2.transpose() * proj);
}

EmpiricalProcessReport empirical_process_check(const PosteriorDraws& draws, const Dataset& data,
                                               const TrueFunctions& truth) {
  if (draws.m1.empty() || draws.m2.size() != draws.m1.size())
    throw std::invalid_argument("empirical_process_check: chain ran without store_nuisance");
  const NuisanceValues m0 = truth.nuisance_values(data.w);
  const Mat eps2 = data.x - m0.m2;
  const Vec u = data.y - m0.m1 - eps2 * truth.beta0;
  EmpiricalProcessReport rep;
  rep.n = data.n();
  rep.draws = static_cast<Index>(draws.m1.size());
  for (std::size_t t = 0; t < draws.m1.size(); ++t) {
    rep.sup_g1 = std::max(rep.sup_g1, multiplier_g1(eps2, draws.m1[t], m0.m1).cwiseAbs().maxCoeff());
    rep.sup_g2 = std::max(rep.sup_g2,
                          multiplier_g2(u, eps2, truth.beta0, draws.m2[t], m0.m2).cwiseAbs().maxCoeff());
  }
  return rep;
}

const ComparisonCell& ComparisonReport::at(const std::string& regime, SamplerId sampler) const {
  for (const auto& c : cells)
    if (c.regime == regime && c.sampler == to_string(sampler)) return c;
  throw std::out_of_range("comparison: no cell for " + regime + "/" + to_string(sampler));
}

ComparisonReport compare_parametrizations(const std::vector<Regime>& regimes, long reps,
                                          double level, std::uint64_t master_seed,
                                          unsigned threads) {
  if (regimes.empty()) throw std::invalid_argument("compare_parametrizations: no regimes");
  ComparisonReport out;
  for (const auto& regime : regimes) {
    for (SamplerId id : {SamplerId::beta_m, SamplerId::beta_eta}) {
      StudySpec spec = regime.spec;
      spec.sampler = id;
      // both samplers see the same datasets
      out.cells.push_back({regime.name, to_string(id),
                           coverage_experiment(spec, reps, level, master_seed, threads)});
    }
  }
  return out;
}

}  // namespace plr
