#include "doctest.h"

#include "plr/dgp.hpp"
#include "plr/frequentist.hpp"

using namespace plr;

namespace {

TrueFunctions truth() {
  TrueFunctions t;
  t.first = ClosedFormTruth{ClosedFormTruth::Kind::sine, 1.0, 1.0};
  t.m02 = {ClosedFormTruth{ClosedFormTruth::Kind::sine, 0.5, 2.0}};
  t.beta0 = Vec::Constant(1, 0.8);
  return t;
}

}  // namespace

TEST_CASE("oracle center is least squares on the true residuals") {
  const TrueFunctions t = truth();
  DgpSpec spec;
  spec.n = 300;
  const Dataset d = simulate(spec, t);
  const auto m0 = t.nuisance_values(d.w);
  const Vec r = d.y - m0.m1;
  const Vec s = d.x.col(0) - m0.m2.col(0);
  const double ols = r.dot(s) / s.squaredNorm();
  const auto ref = oracle_reference(d, t, ModelConfig{});
  CHECK(std::abs(ref.center(0) - ols) <= 1e-12);
  // known variance: covariance sigma01^2 / sum s^2
  CHECK(ref.covariance(0, 0) == doctest::Approx(1.0 / s.squaredNorm()).epsilon(1e-10));
  CHECK(ref.quantile(0, 0.5) == ref.center(0));

  const auto ci = wald_interval(ref, 0.95);
  CHECK((ci[0].second - ref.center(0)) / ref.sd(0) == doctest::Approx(1.959963985).epsilon(1e-8));
  CHECK((ref.center(0) - ci[0].first) / ref.sd(0) == doctest::Approx(1.959963985).epsilon(1e-8));
}

TEST_CASE("unknown-variance reference carries the precision coordinate") {
  const TrueFunctions t = truth();
  DgpSpec spec;
  spec.n = 400;
  const Dataset d = simulate(spec, t);
  ModelConfig m;
  m.variance_known = false;
  const auto ref = oracle_reference(d, t, m);
  REQUIRE(ref.center.size() == 2);
  // xi-block of the information: 1 / (2 xi^2) at xi = 1
  const Mat info = ref.covariance.inverse() / static_cast<double>(d.n());
  CHECK(info(1, 1) == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(std::abs(ref.center(1) - 1.0) < 0.3);
}

TEST_CASE("interval width shrinks like n^{-1/2}") {
  const TrueFunctions t = truth();
  double width[2];
  int k = 0;
  for (Index n : {Index(1000), Index(4000)}) {
    DgpSpec spec;
    spec.n = n;
    spec.seed = 7;
    const auto ci = wald_interval(oracle_reference(simulate(spec, t), t, ModelConfig{}), 0.9);
    width[k++] = ci[0].second - ci[0].first;
  }
  CHECK(width[0] / width[1] == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("feasible partialling-out estimator is consistent") {
  const TrueFunctions t = truth();
  DgpSpec spec;
  spec.n = 2000;
  const Dataset d = simulate(spec, t);
  for (auto kind : {SmootherSpec::Kind::series, SmootherSpec::Kind::nearest_neighbor}) {
    SmootherSpec sm;
    sm.kind = kind;
    const auto est = feasible_robinson(d, sm);
    const double sd = std::sqrt(est.variance(0, 0));
    CHECK(std::abs(est.beta_hat(0) - 0.8) < 4 * sd + 0.05);
    CHECK(est.sigma2_hat == doctest::Approx(1.0).epsilon(0.15));
  }
}

TEST_CASE("degenerate design is reported") {
  TrueFunctions t = truth();
  DgpSpec spec;
  spec.n = 50;
  Dataset d = simulate(spec, t);
  const auto m0 = t.nuisance_values(d.w);
  d.x.col(0) = m0.m2.col(0);
  CHECK_THROWS_AS(oracle_reference(d, t, ModelConfig{}), std::runtime_error);
}
