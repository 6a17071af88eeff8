#include "plr/frequentist.hpp"

#include "plr/dgp.hpp"
#include "plr/priors.hpp"
#include "plr/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace plr {

int default_series_level(Index n) {
  return std::max(0, static_cast<int>(std::ceil(std::log2(static_cast<double>(n)) / 3.0)));
}

namespace {

Vec series_smooth(const Vec& values, const Vec& w, int level) {
  const Index n = values.size();
  // hats plus the linear function w span the continuous piecewise-linear
  // functions on the level-`level` dyadic grid
  const auto hats = static_cast<Index>(coeff_count(level));
  const Index p = level > 0 ? hats + 1 : hats;
  Mat design = Mat::Zero(n, p);
  for (Index i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    if (level > 0) design(i, hats) = w(i);
    for (int l = 1; l <= level; ++l) {
      long k = static_cast<long>(std::floor(w(i) * std::ldexp(1.0, l)));
      k = std::clamp(k, 0L, (1L << l) - 1);
      design(i, static_cast<Index>(coeff_index(l, k))) = basis_eval(l, k, w(i));
    }
  }
  Eigen::CompleteOrthogonalDecomposition<Mat> cod(design);
  const Vec coef = cod.solve(values);
  return design * coef;
}

Vec knn_smooth(const Vec& values, const Mat& w, int k) {
  const Index n = values.size();
  Vec out(n);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) dist[static_cast<std::size_t>(j)] = (w.row(i) - w.row(j)).squaredNorm();
    std::iota(order.begin(), order.end(), Index{0});
    std::nth_element(order.begin(), order.begin() + (k - 1), order.end(), [&](Index a, Index b) {
      const auto da = dist[static_cast<std::size_t>(a)];
      const auto db = dist[static_cast<std::size_t>(b)];
      return da < db || (da == db && a < b);
    });
    double acc = 0.0;
    for (int t = 0; t < k; ++t) acc += values(order[static_cast<std::size_t>(t)]);
    out(i) = acc / k;
  }
  return out;
}

}  // namespace

Vec smooth(const Vec& values, const Mat& w, const SmootherSpec& spec) {
  const Index n = values.size();
  if (w.rows() != n || n < 1) throw std::invalid_argument("smooth: dimension mismatch");
  if (spec.kind == SmootherSpec::Kind::series) {
    if (w.cols() != 1) throw std::invalid_argument("series smoother requires d_w = 1");
    const int level = spec.level >= 0 ? spec.level : default_series_level(n);
    return series_smooth(values, w.col(0), level);
  }
  const int k = spec.k > 0 ? spec.k : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  if (k >= n) throw std::invalid_argument("nearest-neighbour smoother needs k < n");
  return knn_smooth(values, w, k);
}

double GaussianReference::sd(Index j) const { return std::sqrt(covariance(j, j)); }

double GaussianReference::quantile(Index j, double q) const {
  return center(j) + stats::normal_quantile(q) * sd(j);
}

GaussianReference oracle_reference(const Dataset& data, const TrueFunctions& truth,
                                   const ModelConfig& model) {
  data.validate();
  const NuisanceValues m0 = truth.nuisance_values(data.w);
  ThetaState theta0{truth.beta0, 1.0 / truth.sigma01_sq};
  ModelConfig at_truth = model;
  at_truth.sigma01_sq = truth.sigma01_sq;

  const Vec sc = score(data, theta0, m0, at_truth);
  const Mat info = information(data, theta0, m0, at_truth);
  const double n = static_cast<double>(data.n());

  Eigen::LDLT<Mat> ldlt(info);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 1e-12 * info.diagonal().maxCoeff()).all())
    throw std::runtime_error("oracle_reference: information matrix is singular (degenerate design)");

  Vec theta(model.variance_known ? data.dx() : data.dx() + 1);
  theta.head(data.dx()) = truth.beta0;
  if (!model.variance_known) theta(data.dx()) = theta0.xi;

  GaussianReference ref;
  ref.n = data.n();
  // Delta = I^{-1} score / sqrt(n); center = theta0 + Delta / sqrt(n)
  ref.center = theta + ldlt.solve(sc) / n;
  const Mat inv = ldlt.solve(Mat::Identity(info.rows(), info.cols()));
  ref.covariance = 0.5 * (inv + inv.transpose()) / n;
  return ref;
}

RobinsonEstimate feasible_robinson(const Dataset& data, const SmootherSpec& smoother) {
  data.validate();
  RobinsonEstimate est;
  est.y_fit = smooth(data.y, data.w, smoother);
  est.x_fit.resize(data.n(), data.dx());
  for (Index j = 0; j < data.dx(); ++j) est.x_fit.col(j) = smooth(data.x.col(j), data.w, smoother);

  const Vec ry = data.y - est.y_fit;
  const Mat rx = data.x - est.x_fit;
  const Mat gram = rx.transpose() * rx;
  Eigen::LDLT<Mat> ldlt(gram);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 1e-12 * std::max(1.0, gram.diagonal().maxCoeff())).all())
    throw std::runtime_error("feasible_robinson: singular residual design");
  est.beta_hat = ldlt.solve(rx.transpose() * ry);
  const Vec resid = ry - rx * est.beta_hat;
  const double dof = static_cast<double>(std::max<Index>(data.n() - data.dx(), 1));
  est.sigma2_hat = resid.squaredNorm() / dof;
  est.variance = est.sigma2_hat * ldlt.solve(Mat::Identity(data.dx(), data.dx()));
  return est;
}

std::vector<std::pair<double, double>> wald_interval(const GaussianReference& ref, double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("wald_interval: level must lie in (0, 1)");
  const double z = stats::normal_quantile(1.0 - 0.5 * (1.0 - level));
  std::vector<std::pair<double, double>> out;
  for (Index j = 0; j < ref.center.size(); ++j)
    out.emplace_back(ref.center(j) - z * ref.sd(j), ref.center(j) + z * ref.sd(j));
  return out;
}

}  // namespace plr
