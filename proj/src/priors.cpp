#include "plr/priors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace plr {

double basis_eval(int level, long shift, double w) {
  if (level < 0 || level > 40 || shift < 0 || shift >= (1L << level))
    throw std::out_of_range("basis index (" + std::to_string(level) + ", " +
                            std::to_string(shift) + ") out of range");
  if (level == 0) return 1.0;
  const double scale = std::ldexp(1.0, level);
  const double t = w * scale - static_cast<double>(shift);  // support maps to [0, 1]
  if (t <= 0.0 || t >= 1.0) return 0.0;
  const double tent = 1.0 - std::abs(2.0 * t - 1.0);
  return std::sqrt(scale) * tent;
}

double series_eval(const SeriesFunction& f, double w) {
  if (f.coeffs.size() != coeff_count(f.max_level))
    throw std::invalid_argument("series coefficient array has the wrong length");
  double value = f.coeffs[0];
  // Only one hat per level can be non-zero at w.
  for (int l = 1; l <= f.max_level; ++l) {
    const double scale = std::ldexp(1.0, l);
    long k = static_cast<long>(std::floor(w * scale));
    k = std::clamp(k, 0L, (1L << l) - 1);
    value += f.coeffs[coeff_index(l, k)] * basis_eval(l, k, w);
  }
  return value;
}

double SeriesFunction::operator()(double w) const { return series_eval(*this, w); }

Vec SeriesFunction::eval(const Vec& w) const {
  Vec out(w.size());
  for (Index i = 0; i < w.size(); ++i) out(i) = series_eval(*this, w(i));
  return out;
}

double weighted_sup_norm(const SeriesFunction& f, double alpha) {
  double best = 0.0;
  for (int l = 0; l <= f.max_level; ++l) {
    const double weight = std::exp2(l * (alpha + 0.5));
    for (long k = 0; k < (1L << l); ++k)
      best = std::max(best, weight * std::abs(f.coeffs[coeff_index(l, k)]));
  }
  return best;
}

void MaternSpec::validate() const {
  if (!(alpha > 0.0 && lengthscale > 0.0 && amplitude > 0.0 && jitter > 0.0))
    throw std::invalid_argument("Matern spec: all fields must be positive");
}

bool WaveletPriorSpec::validate() const {
  if (!(alpha0 > 0.0)) throw std::invalid_argument("wavelet prior: alpha0 must be positive");
  if (!(M > 0.0)) throw std::invalid_argument("wavelet prior: M must be positive");
  return alpha0 > 0.5;
}

int WaveletPriorSpec::resolved_level(Index n) const {
  if (max_level >= 0) return max_level;
  return std::max(0, static_cast<int>(std::ceil(std::log2(static_cast<double>(std::max<Index>(n, 1))))));
}

double WaveletPriorSpec::support_bound(int level) const {
  return M * std::exp2(-level * (alpha0 + 0.5));
}

std::string prior_name(const NuisancePrior& p) {
  struct {
    std::string operator()(const MaternSpec&) const { return "matern"; }
    std::string operator()(const WaveletPriorSpec&) const { return "wavelet"; }
    std::string operator()(const GridPriorSpec&) const { return "grid"; }
  } visitor;
  return std::visit(visitor, p);
}

double matern_kernel_radial(double r, int dw, const MaternSpec& spec) {
  spec.validate();
  if (dw < 1) throw std::invalid_argument("matern kernel: d_w must be >= 1");
  const double nu = spec.alpha;
  const double half_d = 0.5 * dw;
  const double h = std::abs(r) / spec.lengthscale;
  // integral of (1 + |l|^2)^(-nu - d/2) over R^d
  const double at_zero = std::pow(std::numbers::pi, half_d) * std::tgamma(nu) / std::tgamma(nu + half_d);
  if (h < 1e-12) return spec.amplitude * at_zero;
  const double s = nu + half_d;
  const double log_value = half_d * std::log(2.0 * std::numbers::pi) + (1.0 - s) * std::log(2.0) -
                           std::lgamma(s) + nu * std::log(h);
  const double k = std::cyl_bessel_k(nu, h);
  return spec.amplitude * std::min(at_zero, std::exp(log_value) * k);
}

double matern_kernel(std::span<const double> ws, std::span<const double> wt,
                     const MaternSpec& spec) {
  if (ws.size() != wt.size()) throw std::invalid_argument("matern kernel: dimension mismatch");
  double r2 = 0.0;
  for (std::size_t j = 0; j < ws.size(); ++j) r2 += (ws[j] - wt[j]) * (ws[j] - wt[j]);
  return matern_kernel_radial(std::sqrt(r2), static_cast<int>(ws.size()), spec);
}

GramFactor gram_and_factor(const Mat& points, const MaternSpec& spec) {
  spec.validate();
  const Index n = points.rows();
  const int dw = static_cast<int>(points.cols());
  if (n < 1) throw std::invalid_argument("gram_and_factor: no points");
  if (!points.allFinite()) throw std::invalid_argument("gram_and_factor: non-finite point");

  GramFactor f;
  f.gram.resize(n, n);
  for (Index i = 0; i < n; ++i) {
    f.gram(i, i) = matern_kernel_radial(0.0, dw, spec);
    for (Index j = 0; j < i; ++j) {
      const double r = (points.row(i) - points.row(j)).norm();
      f.gram(i, j) = f.gram(j, i) = matern_kernel_radial(r, dw, spec);
    }
  }

  Eigen::LDLT<Mat> ldlt(f.gram);
  f.min_pivot = ldlt.vectorD().minCoeff();

  const double top = 1e-4;
  f.unjittered_ok = Eigen::LLT<Mat>(f.gram).info() == Eigen::Success;
  double jitter = spec.jitter;
  for (;;) {
    f.jitter_ladder.push_back(jitter);
    Mat a = f.gram;
    a.diagonal().array() += jitter;
    Eigen::LLT<Mat> llt(a);
    if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0) {
      f.chol = llt.matrixL();
      f.jitter = jitter;
      break;
    }
    if (jitter >= top * (1.0 - 1e-12)) {
      throw std::runtime_error("gram_and_factor: Cholesky failed after jitter escalation to " +
                               std::to_string(top) + " (near-duplicate design points?)");
    }
    jitter = std::min(jitter * 10.0, top);
    ++f.escalations;
  }

  Eigen::SelfAdjointEigenSolver<Mat> eig(f.gram);
  if (eig.info() != Eigen::Success) throw std::runtime_error("gram_and_factor: eigensolver failed");
  f.eigvecs = eig.eigenvectors();
  f.eigvals = eig.eigenvalues().cwiseMax(0.0);
  return f;
}

Vec sample_gp(const GramFactor& factor, Rng& rng) {
  Vec z(factor.chol.rows());
  for (Index i = 0; i < z.size(); ++i) z(i) = std_normal(rng);
  return factor.chol.triangularView<Eigen::Lower>() * z;
}

SeriesFunction sample_wavelet_prior(const WaveletPriorSpec& spec, int max_level, Rng& rng) {
  spec.validate();
  if (max_level < 0) throw std::invalid_argument("wavelet prior: negative truncation level");
  SeriesFunction f;
  f.max_level = max_level;
  f.coeffs.resize(coeff_count(max_level));
  std::uniform_real_distribution<double> u(-spec.M, spec.M);
  for (int l = 0; l <= max_level; ++l) {
    const double decay = std::exp2(-l * (spec.alpha0 + 0.5));
    const double bound = spec.support_bound(l);
    for (long k = 0; k < (1L << l); ++k)
      f.coeffs[coeff_index(l, k)] = std::clamp(decay * u(rng), -bound, bound);
  }
  return f;
}

SeriesFunction sample_wavelet_prior(const WaveletPriorSpec& spec, Rng& rng) {
  return sample_wavelet_prior(spec, std::max(spec.max_level, 0), rng);
}

Vec sample_prior_values(const NuisancePrior& prior, const Mat& points, Rng& rng) {
  const Index n = points.rows();
  if (const auto* m = std::get_if<MaternSpec>(&prior)) {
    return sample_gp(gram_and_factor(points, *m), rng);
  }
  if (const auto* wv = std::get_if<WaveletPriorSpec>(&prior)) {
    if (points.cols() != 1) throw std::invalid_argument("wavelet prior requires d_w = 1");
    const auto f = sample_wavelet_prior(*wv, wv->resolved_level(n), rng);
    return f.eval(points.col(0));
  }
  const auto& g = std::get<GridPriorSpec>(prior);
  if (g.values.empty()) throw std::invalid_argument("grid prior has no values");
  std::uniform_int_distribution<std::size_t> pick(0, g.values.size() - 1);
  Vec out(n);
  for (Index i = 0; i < n; ++i) out(i) = g.values[pick(rng)];
  return out;
}

}  // namespace plr
