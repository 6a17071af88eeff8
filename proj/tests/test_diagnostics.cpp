#include "doctest.h"

#include "plr/diagnostics.hpp"
#include "plr/stats.hpp"

using namespace plr;

namespace {

GaussianReference unit_reference() {
  GaussianReference ref;
  ref.center = Vec::Constant(1, 0.3);
  ref.covariance = Mat::Constant(1, 1, 0.04);
  ref.n = 100;
  return ref;
}

PosteriorDraws iid_draws(const GaussianReference& ref, int count, double shift, std::uint64_t seed) {
  Rng rng(seed);
  PosteriorDraws d;
  d.beta = Mat(count, 1);
  for (int i = 0; i < count; ++i) d.beta(i, 0) = ref.center(0) + shift * ref.sd(0) + ref.sd(0) * std_normal(rng);
  return d;
}

StudySpec small_study() {
  StudySpec s;
  s.dgp.n = 100;
  s.truth.first = ClosedFormTruth{ClosedFormTruth::Kind::sine, 1.0, 1.0};
  s.truth.m02 = {ClosedFormTruth{ClosedFormTruth::Kind::linear, 1.0, 1.0}};
  s.truth.beta0 = Vec::Constant(1, 1.0);
  s.chain.n_iter = 300;
  s.chain.burn_in = 100;
  return s;
}

}  // namespace

TEST_CASE("bvm distance of exact reference draws") {
  const auto ref = unit_reference();
  const auto rep = bvm_distance(iid_draws(ref, 10000, 0.0, 1), ref);
  CHECK(rep.ks[0] <= 0.025);
  CHECK(rep.median_gap() < 0.05);
  CHECK(rep.wasserstein1[0] < 0.05 * ref.sd(0));
  CHECK(rep.chi2_dim == 0);  // joint check only for more than one coordinate
  CHECK_FALSE(rep.tv_proxy_note.empty());

  const auto far = bvm_distance(iid_draws(ref, 10000, 5.0, 2), ref);
  CHECK(far.ks[0] >= 0.95);
  CHECK(far.median_gap() == doctest::Approx(5.0).epsilon(0.02));

  CHECK_THROWS_AS(bvm_distance(iid_draws(ref, 100, 0.0, 3), ref), std::invalid_argument);
}

TEST_CASE("multiplier statistics vanish at the truth") {
  Rng rng(4);
  const Index n = 50;
  Mat eps2(n, 1);
  Vec u(n), m1(n);
  Mat m2(n, 1);
  for (Index i = 0; i < n; ++i) {
    eps2(i, 0) = std_normal(rng);
    u(i) = std_normal(rng);
    m1(i) = std_normal(rng);
    m2(i, 0) = std_normal(rng);
  }
  const Vec b = Vec::Constant(1, 0.5);
  CHECK(multiplier_g1(eps2, m1, m1).norm() == 0.0);
  CHECK(multiplier_g2(u, eps2, b, m2, m2).norm() == 0.0);
  // G1 = n^{-1/2} sum eps2_i (m1 - m01)(w_i)
  const Vec m01 = Vec::Zero(n);
  CHECK(multiplier_g1(eps2, m1, m01)(0) == doctest::Approx(eps2.col(0).dot(m1) / std::sqrt(double(n))));
  CHECK(empirical_l2(Vec::Constant(4, 2.0)) == doctest::Approx(2.0));
}

TEST_CASE("G2 has mean zero over the errors") {
  Rng rng(5);
  const Index n = 40;
  Mat m2(n, 1), m02 = Mat::Zero(n, 1);
  for (Index i = 0; i < n; ++i) m2(i, 0) = std::sin(double(i));
  const Vec b = Vec::Constant(1, 0.7);
  const int reps = 20000;
  std::vector<double> vals;
  for (int r = 0; r < reps; ++r) {
    Mat eps2(n, 1);
    Vec u(n);
    for (Index i = 0; i < n; ++i) {
      eps2(i, 0) = std_normal(rng);
      u(i) = std_normal(rng);
    }
    vals.push_back(multiplier_g2(u, eps2, b, m2, m02)(0));
  }
  CHECK(std::abs(stats::mean(vals)) <= 4 * std::sqrt(stats::variance(vals) / reps));
}

TEST_CASE("coverage bookkeeping with the oracle sampler") {
  StudySpec s = small_study();
  s.sampler = SamplerId::oracle;
  s.chain.n_iter = 1100;
  s.chain.burn_in = 100;
  CHECK_THROWS_AS(coverage_experiment(s, 10, 0.9, 1, 1), std::invalid_argument);
  const auto rep = coverage_experiment(s, 60, 0.9, 1, 2, false);
  CHECK(rep.replications == 60);
  CHECK(rep.failures == 0);
  CHECK(rep.outcomes.size() == 60);
  CHECK(rep.mc_se == doctest::Approx(std::sqrt(rep.empirical * (1 - rep.empirical) / 60)));
  long covered = 0;
  for (const auto& o : rep.outcomes) covered += o.covered;
  CHECK(rep.empirical == doctest::Approx(covered / 60.0));
  CHECK(rep.empirical >= 0.75);

  // identical reports for 1 and 2 threads
  const auto one = coverage_experiment(s, 60, 0.9, 1, 1, false);
  CHECK(one.empirical == rep.empirical);
  CHECK(one.outcomes[17].lower == rep.outcomes[17].lower);
}

TEST_CASE("coverage with the Gibbs sampler runs") {
  StudySpec s = small_study();
  const auto rep = coverage_experiment(s, 4, 0.9, 3, 1, true);
  CHECK(rep.failures == 0);
  CHECK(rep.avg_width > 0);
  CHECK(rep.sampler == "beta-m");
}

TEST_CASE("contraction grid validation") {
  StudySpec s = small_study();
  CHECK_THROWS_AS(contraction_curve(s, {100, 200}, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(contraction_curve(s, {100, 400, 200}, 1, 1), std::invalid_argument);
  s.chain.n_iter = 200;
  s.chain.burn_in = 100;
  const auto rep = contraction_curve(s, {50, 100, 200}, 1, 1);
  CHECK(rep.risk.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(rep.risk[k] == std::max(rep.risk_m1[k], rep.risk_m2[k]));
}

TEST_CASE("empirical process check needs stored nuisance draws") {
  StudySpec s = small_study();
  const Dataset d = simulate(s.dgp, s.truth);
  auto draws = gibbs_beta_m(d, s.setup.priors, s.chain, s.model);
  CHECK_THROWS(empirical_process_check(draws, d, s.truth));
  s.chain.store_nuisance = true;
  draws = gibbs_beta_m(d, s.setup.priors, s.chain, s.model);
  const auto ep = empirical_process_check(draws, d, s.truth);
  CHECK(ep.draws == draws.draws());
  CHECK(ep.sup_g1 >= 0);
}
