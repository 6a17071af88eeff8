#include "plr/core_model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace plr {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

bool all_finite(const Mat& a) { return a.allFinite(); }

}  // namespace

void Dataset::validate() const {
  if (n() < 2) throw std::invalid_argument("dataset needs at least 2 observations");
  if (x.rows() != n() || w.rows() != n())
    throw std::invalid_argument("dataset: y, x and w must have the same number of rows");
  if (dx() < 1) throw std::invalid_argument("dataset: d_x must be at least 1");
  if (dw() < 1) throw std::invalid_argument("dataset: d_w must be at least 1");
  if (!y.allFinite() || !all_finite(x) || !all_finite(w))
    throw std::invalid_argument("dataset: non-finite entry");
  if ((w.array() < 0.0).any() || (w.array() > 1.0).any())
    throw std::invalid_argument("dataset: control variables must lie in [0, 1]");
}

void ModelConfig::validate() const {
  if (!(sigma01_sq > 0.0)) throw std::invalid_argument("model: sigma01_sq must be positive");
  if (!(sigma02_sq > 0.0)) throw std::invalid_argument("model: sigma02_sq must be positive");
  if (!(xi_lower > 0.0) || !(xi_upper > xi_lower))
    throw std::invalid_argument("model: xi bounds must satisfy 0 < lower < upper");
  if (!(beta_bound > 0.0)) throw std::invalid_argument("model: beta_bound must be positive");
}

void NuisanceValues::check_conforms(const Dataset& data) const {
  if (m1.size() != data.n() || m2.rows() != data.n() || m2.cols() != data.dx())
    throw std::invalid_argument("nuisance values do not conform to the dataset");
}

double effective_xi(const ThetaState& theta, const ModelConfig& config) {
  const double xi = config.variance_known ? 1.0 / config.sigma01_sq : theta.xi;
  if (!(xi > 0.0)) throw std::invalid_argument("precision xi must be positive");
  return xi;
}

Eigen::Matrix2d cov_matrix(double beta, const ModelConfig& config) {
  const double s1 = config.sigma01_sq;
  const double s2 = config.sigma02_sq;
  if (!(s1 > 0.0) || !(s2 > 0.0)) throw std::invalid_argument("cov_matrix: variances must be positive");
  Eigen::Matrix2d v;
  v << s1 + s2 * beta * beta, beta * s2,
       beta * s2, s2;
  return v;
}

Vec robinson_decompose(const Vec& eta0, const Vec& beta0, const Mat& m02) {
  if (m02.rows() != eta0.size() || m02.cols() != beta0.size())
    throw std::invalid_argument("robinson_decompose: dimension mismatch");
  return eta0 + m02 * beta0;
}

Vec recover_eta(const Vec& m1, const Vec& beta, const Mat& m2) {
  if (m2.rows() != m1.size() || m2.cols() != beta.size())
    throw std::invalid_argument("recover_eta: dimension mismatch");
  return m1 - m2 * beta;
}

Vec outcome_residuals(const Dataset& data, const Vec& beta, const NuisanceValues& m) {
  m.check_conforms(data);
  if (beta.size() != data.dx()) throw std::invalid_argument("beta has wrong dimension");
  return data.y - m.m1 - (data.x - m.m2) * beta;
}

double log_quasi_likelihood(const Dataset& data, const ThetaState& theta,
                            const NuisanceValues& m, const ModelConfig& config) {
  const double xi = effective_xi(theta, config);
  const Vec r = outcome_residuals(data, theta.beta, m);
  const double n = static_cast<double>(data.n());
  const double dx = static_cast<double>(data.dx());
  const double s2 = config.sigma02_sq;

  const double y_part = 0.5 * n * (std::log(xi) - kLog2Pi) - 0.5 * xi * r.squaredNorm();
  const double x_part = -0.5 * n * dx * (kLog2Pi + std::log(s2)) -
                        0.5 * (data.x - m.m2).squaredNorm() / s2;
  return y_part + x_part;
}

Vec score(const Dataset& data, const ThetaState& theta, const NuisanceValues& m,
          const ModelConfig& config) {
  const double xi = effective_xi(theta, config);
  const Vec r = outcome_residuals(data, theta.beta, m);
  const Mat s = data.x - m.m2;
  const Index dx = data.dx();

  Vec out(config.variance_known ? dx : dx + 1);
  out.head(dx) = xi * (s.transpose() * r);
  if (!config.variance_known) {
    out(dx) = static_cast<double>(data.n()) / (2.0 * xi) - 0.5 * r.squaredNorm();
  }
  return out;
}

Mat information(const Dataset& data, const ThetaState& theta, const NuisanceValues& m,
                const ModelConfig& config) {
  const double xi = effective_xi(theta, config);
  const Vec r = outcome_residuals(data, theta.beta, m);
  const Mat s = data.x - m.m2;
  const Index dx = data.dx();
  const double n = static_cast<double>(data.n());

  Mat out = Mat::Zero(config.variance_known ? dx : dx + 1, config.variance_known ? dx : dx + 1);
  out.topLeftCorner(dx, dx) = xi * (s.transpose() * s) / n;
  if (!config.variance_known) {
    const Vec cross = -(s.transpose() * r) / n;
    out.block(0, dx, dx, 1) = cross;
    out.block(dx, 0, 1, dx) = cross.transpose();
    out(dx, dx) = 1.0 / (2.0 * xi * xi);
  }
  return out;
}

Vec DiscretePopulation::w_marginal() const {
  Vec pw = Vec::Zero(n_w);
  for (const auto& a : atoms) pw(a.w_index) += a.prob;
  return pw;
}

void DiscretePopulation::validate() const {
  if (atoms.empty() || n_w < 1) throw std::invalid_argument("population has empty support");
  const Index dx = atoms.front().x.size();
  double total = 0.0;
  for (const auto& a : atoms) {
    if (a.w_index < 0 || a.w_index >= n_w)
      throw std::invalid_argument("population atom has out-of-range w index");
    if (a.x.size() != dx) throw std::invalid_argument("population atoms disagree on d_x");
    if (!(a.prob >= 0.0)) throw std::invalid_argument("population atom has negative mass");
    total += a.prob;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("population masses must sum to one");
  if ((w_marginal().array() <= 0.0).any())
    throw std::invalid_argument("population W-marginal must be strictly positive");
}

double kl_objective(const DiscretePopulation& pop, const Vec& beta, const NuisanceValues& m,
                    const ModelConfig& config) {
  pop.validate();
  const Index dx = pop.atoms.front().x.size();
  if (beta.size() != dx || m.m1.size() != pop.n_w || m.m2.rows() != pop.n_w ||
      m.m2.cols() != dx)
    throw std::invalid_argument("kl_objective: dimension mismatch");

  const double xi = 1.0 / config.sigma01_sq;
  const double s2 = config.sigma02_sq;
  const double dxd = static_cast<double>(dx);
  double value = 0.0;
  for (const auto& a : pop.atoms) {
    const Vec s = a.x - m.m2.row(a.w_index).transpose();
    const double r = a.y - m.m1(a.w_index) - s.dot(beta);
    const double logp = 0.5 * (std::log(xi) - kLog2Pi) - 0.5 * xi * r * r -
                        0.5 * dxd * (kLog2Pi + std::log(s2)) - 0.5 * s.squaredNorm() / s2;
    value -= a.prob * logp;
  }
  return value;
}

PopulationTruth population_truth(const DiscretePopulation& pop) {
  pop.validate();
  const Index dx = pop.atoms.front().x.size();
  const Vec pw = pop.w_marginal();

  PopulationTruth t;
  t.m0.m1 = Vec::Zero(pop.n_w);
  t.m0.m2 = Mat::Zero(pop.n_w, dx);
  for (const auto& a : pop.atoms) {
    t.m0.m1(a.w_index) += a.prob * a.y;
    t.m0.m2.row(a.w_index) += a.prob * a.x.transpose();
  }
  for (Index k = 0; k < pop.n_w; ++k) {
    t.m0.m1(k) /= pw(k);
    t.m0.m2.row(k) /= pw(k);
  }

  Mat sxx = Mat::Zero(dx, dx);
  Vec sxy = Vec::Zero(dx);
  for (const auto& a : pop.atoms) {
    const Vec s = a.x - t.m0.m2.row(a.w_index).transpose();
    sxx += a.prob * s * s.transpose();
    sxy += a.prob * s * (a.y - t.m0.m1(a.w_index));
  }
  t.beta0 = sxx.ldlt().solve(sxy);
  return t;
}

}  // namespace plr
