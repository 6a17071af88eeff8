#include "plr/samplers.hpp"

#include "plr/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace plr {

std::string to_string(SamplerId s) {
  switch (s) {
    case SamplerId::beta_m: return "beta-m";
    case SamplerId::beta_eta: return "beta-eta";
    case SamplerId::oracle: return "oracle";
  }
  return "?";
}

SamplerId parse_sampler_id(const std::string& s) {
  if (s == "beta-m") return SamplerId::beta_m;
  if (s == "beta-eta") return SamplerId::beta_eta;
  if (s == "oracle") return SamplerId::oracle;
  throw std::invalid_argument("unknown sampler '" + s + "' (beta-m | beta-eta | oracle)");
}

std::string to_string(InitMode m) {
  switch (m) {
    case InitMode::prior_draw: return "prior-draw";
    case InitMode::zero: return "zero";
    case InitMode::user: return "user-supplied";
  }
  return "?";
}

InitMode parse_init_mode(const std::string& s) {
  if (s == "prior-draw") return InitMode::prior_draw;
  if (s == "zero") return InitMode::zero;
  if (s == "user-supplied") return InitMode::user;
  throw std::invalid_argument("unknown init mode '" + s + "'");
}

std::string to_string(BetaUpdate b) {
  return b == BetaUpdate::truncated ? "conjugate-truncated" : "conjugate-flat";
}

BetaUpdate parse_beta_update(const std::string& s) {
  if (s == "conjugate-truncated") return BetaUpdate::truncated;
  if (s == "conjugate-flat") return BetaUpdate::flat;
  throw std::invalid_argument("unknown beta update '" + s + "'");
}

void ChainConfig::validate() const {
  if (n_iter < 1) throw std::invalid_argument("chain: n_iter must be positive");
  if (burn_in < 0 || burn_in >= n_iter) throw std::invalid_argument("chain: need 0 <= burn_in < n_iter");
  if (thin < 1) throw std::invalid_argument("chain: thin must be at least 1");
  if (init == InitMode::user && (!user_theta || !user_m))
    throw std::invalid_argument("chain: user-supplied init needs theta and nuisance values");
}

long ChainConfig::retained() const { return (n_iter - burn_in) / thin; }

std::vector<double> PosteriorDraws::beta_column(Index j) const {
  std::vector<double> out(static_cast<std::size_t>(beta.rows()));
  for (Index i = 0; i < beta.rows(); ++i) out[static_cast<std::size_t>(i)] = beta(i, j);
  return out;
}

// ---------------------------------------------------------------------------
// Blocks

Vec draw_gp_regression(const GramFactor& factor, const Vec& z, double noise_var, Rng& rng) {
  if (!(noise_var > 0.0)) throw std::invalid_argument("GP block: noise variance must be positive");
  const Mat& q = factor.eigvecs;
  const Vec zt = q.transpose() * z;
  Vec g(zt.size());
  for (Index j = 0; j < zt.size(); ++j) {
    const double lam = factor.eigvals(j) + factor.jitter;
    const double shrink = lam / (lam + noise_var);
    g(j) = shrink * zt(j) + std::sqrt(shrink * noise_var) * std_normal(rng);
  }
  return q * g;
}

Vec draw_grid_regression(const GridPriorSpec& prior, const Vec& z, double noise_var, Rng& rng) {
  if (prior.values.empty()) throw std::invalid_argument("grid block: empty grid");
  Vec out(z.size());
  std::vector<double> logw(prior.values.size());
  for (Index i = 0; i < z.size(); ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < prior.values.size(); ++g) {
      const double d = z(i) - prior.values[g];
      logw[g] = -0.5 * d * d / noise_var;
      top = std::max(top, logw[g]);
    }
    double total = 0.0;
    for (auto& lw : logw) total += (lw = std::exp(lw - top));
    double u = uniform01(rng) * total;
    std::size_t pick = prior.values.size() - 1;
    for (std::size_t g = 0; g < logw.size(); ++g) {
      if (u < logw[g]) {
        pick = g;
        break;
      }
      u -= logw[g];
    }
    out(i) = prior.values[pick];
  }
  return out;
}

PseudoRegression m1_conditional(const Dataset& data, const Vec& beta, const Mat& m2, double xi) {
  return {data.y - (data.x - m2) * beta, 1.0 / xi};
}

PseudoRegression m2_conditional(const Dataset& data, const Vec& beta, const Vec& m1, const Mat& m2,
                                Index k, double xi, double sigma02_sq) {
  const double bk = beta(k);
  const double inv_s2 = 1.0 / sigma02_sq;
  // c_i = r_i with the k-th column's m2 term removed
  Vec c = data.y - m1 - (data.x - m2) * beta;
  c -= bk * m2.col(k);
  const double prec = xi * bk * bk + inv_s2;
  return {(inv_s2 * data.x.col(k) - xi * bk * c) / prec, 1.0 / prec};
}

Vec draw_beta_conjugate(const Vec& r, const Mat& s, double xi, std::optional<double> bound,
                        const Vec& current, Rng& rng, BetaBlockStats* stats) {
  const Index d = s.cols();
  const Mat sts = s.transpose() * s;
  Eigen::LLT<Mat> llt(sts);
  if (llt.info() != Eigen::Success) throw std::runtime_error("beta block: singular design x - m2");
  const Vec mean = llt.solve(s.transpose() * r);
  // precision xi * S'S = xi L L'; draw mean + L'^{-1} z / sqrt(xi)
  auto unconstrained = [&]() {
    Vec z(d);
    for (Index j = 0; j < d; ++j) z(j) = std_normal(rng);
    return Vec(mean + llt.matrixU().solve(z) / std::sqrt(xi));
  };
  if (!bound) return unconstrained();

  const double b = *bound;
  auto inside = [&](const Vec& v) { return (v.array().abs() <= b).all(); };

  if (d == 1) {
    const double sd = 1.0 / std::sqrt(xi * sts(0, 0));
    const double mass = stats::normal_cdf((b - mean(0)) / sd) - stats::normal_cdf((-b - mean(0)) / sd);
    Vec out(1);
    if (mass >= 0.1) {
      for (;;) {
        out(0) = mean(0) + sd * std_normal(rng);
        if (std::abs(out(0)) <= b) break;
      }
      if (stats) ++stats->rejection_draws;
    } else {
      out(0) = stats::sample_truncated_normal(mean(0), sd, -b, b, rng);
      if (stats) ++stats->inverse_cdf_draws;
    }
    return out;
  }

  for (int attempt = 0; attempt < 50; ++attempt) {
    Vec v = unconstrained();
    if (inside(v)) {
      if (stats) ++stats->rejection_draws;
      return v;
    }
  }
  // Coordinatewise Gibbs sweep from the current point: b_j | b_-j is normal
  // with precision xi (S'S)_jj.
  Vec out = current.cwiseMax(-b).cwiseMin(b);
  for (Index j = 0; j < d; ++j) {
    const double prec = xi * sts(j, j);
    double cond_mean = mean(j);
    for (Index k = 0; k < d; ++k)
      if (k != j) cond_mean -= sts(j, k) / sts(j, j) * (out(k) - mean(k));
    out(j) = stats::sample_truncated_normal(cond_mean, 1.0 / std::sqrt(prec), -b, b, rng);
  }
  if (stats) ++stats->coordinate_draws;
  return out;
}

double draw_xi_mh(double current, double ssr, Index n, double lo, double hi, Rng& rng,
                  bool* accepted) {
  const double shape = 0.5 * static_cast<double>(n) + 1.0;
  const double rate = std::max(0.5 * ssr, 1e-300);
  const double proposal = stats::sample_truncated_gamma(shape, rate, lo, hi, rng);
  // flat prior on [lo, hi]: target density ~ xi^{n/2} exp(-xi ssr / 2)
  auto log_target = [&](double x) { return 0.5 * static_cast<double>(n) * std::log(x) - 0.5 * ssr * x; };
  auto log_proposal = [&](double x) { return stats::gamma_log_density(x, shape, rate); };
  const double log_ratio = log_target(proposal) - log_target(current) -
                           (log_proposal(proposal) - log_proposal(current));
  const bool ok = std::log(uniform01(rng)) < log_ratio;
  if (accepted) *accepted = ok;
  return ok ? proposal : current;
}

double slice_sample_bounded(double x0, double lo, double hi,
                            const std::function<double(double)>& log_density, Rng& rng,
                            int max_shrink, int* shrinks) {
  if (!(lo <= x0 && x0 <= hi)) throw std::invalid_argument("slice: start point outside support");
  if (!(lo < hi)) {
    if (shrinks) *shrinks = 0;
    return x0;
  }
  const double f0 = log_density(x0);
  if (!std::isfinite(f0)) throw SliceError("slice: log density not finite at current point");
  const double level = f0 + std::log(uniform01(rng));
  double left = lo;
  double right = hi;
  for (int it = 0;; ++it) {
    if (it > max_shrink)
      throw SliceError("slice: shrinkage exceeded " + std::to_string(max_shrink) +
                       " steps (x0=" + std::to_string(x0) + ", bracket [" + std::to_string(left) +
                       ", " + std::to_string(right) + "])");
    const double x1 = left + (right - left) * uniform01(rng);
    if (log_density(x1) >= level) {
      if (shrinks) *shrinks = it;
      return x1;
    }
    if (x1 < x0) {
      left = x1;
    } else {
      right = x1;
    }
  }
}

HatDesign HatDesign::build(const Vec& w, int max_level) {
  HatDesign h;
  h.max_level = max_level;
  h.support.resize(coeff_count(max_level));
  for (Index i = 0; i < w.size(); ++i) {
    h.support[0].emplace_back(i, 1.0);
    for (int l = 1; l <= max_level; ++l) {
      long k = static_cast<long>(std::floor(w(i) * std::ldexp(1.0, l)));
      k = std::clamp(k, 0L, (1L << l) - 1);
      const double v = basis_eval(l, k, w(i));
      if (v != 0.0) h.support[coeff_index(l, k)].emplace_back(i, v);
    }
  }
  return h;
}

double slice_update_wavelet(const SeriesFunction& coeffs, int level, long shift,
                            const HatDesign& design, const Vec& residuals, double noise_var,
                            const WaveletPriorSpec& spec, Rng& rng, int* shrinks) {
  if (level < 0 || level > coeffs.max_level || shift < 0 || shift >= (1L << level))
    throw std::out_of_range("slice_update_wavelet: coefficient index out of range");
  const std::size_t idx = coeff_index(level, shift);
  const double c0 = coeffs.coeffs[idx];
  const double bound = spec.support_bound(level);
  // log-likelihood of c as a quadratic in delta = c - c0
  double a = 0.0, b = 0.0;
  for (const auto& [i, psi] : design.support[idx]) {
    a += psi * psi;
    b += residuals(i) * psi;
  }
  const double inv = 1.0 / noise_var;
  auto log_density = [&](double c) {
    const double delta = c - c0;
    return -0.5 * inv * (a * delta * delta - 2.0 * b * delta);
  };
  return slice_sample_bounded(std::clamp(c0, -bound, bound), -bound, bound, log_density, rng, 100,
                              shrinks);
}

// ---------------------------------------------------------------------------
// NuisanceUpdater

NuisanceUpdater::NuisanceUpdater(const NuisancePrior& prior, const Mat& w,
                                 std::shared_ptr<const GramFactor> gram)
    : prior_(prior), gram_(std::move(gram)), values_(Vec::Zero(w.rows())) {
  if (const auto* m = std::get_if<MaternSpec>(&prior_)) {
    if (!gram_) gram_ = std::make_shared<const GramFactor>(gram_and_factor(w, *m));
  } else if (const auto* wv = std::get_if<WaveletPriorSpec>(&prior_)) {
    if (w.cols() != 1) throw std::invalid_argument("wavelet prior requires d_w = 1");
    wv->validate();
    const int level = wv->resolved_level(w.rows());
    hats_ = HatDesign::build(w.col(0), level);
    series_ = SeriesFunction{level, std::vector<double>(coeff_count(level), 0.0)};
  }
}

Vec NuisanceUpdater::initial_values(InitMode mode, Rng& rng) {
  const Index n = values_.size();
  if (series_) {
    const auto& spec = std::get<WaveletPriorSpec>(prior_);
    if (mode == InitMode::prior_draw) {
      series_ = sample_wavelet_prior(spec, series_->max_level, rng);
    } else {
      std::fill(series_->coeffs.begin(), series_->coeffs.end(), 0.0);
    }
    values_ = Vec::Zero(n);
    for (std::size_t c = 0; c < hats_->support.size(); ++c)
      for (const auto& [i, psi] : hats_->support[c]) values_(i) += series_->coeffs[c] * psi;
    return values_;
  }
  if (mode == InitMode::prior_draw) {
    if (gram_) {
      values_ = sample_gp(*gram_, rng);
    } else {
      const auto& g = std::get<GridPriorSpec>(prior_);
      std::uniform_int_distribution<std::size_t> pick(0, g.values.size() - 1);
      for (Index i = 0; i < n; ++i) values_(i) = g.values[pick(rng)];
    }
  } else {
    values_ = Vec::Zero(n);
    if (const auto* g = std::get_if<GridPriorSpec>(&prior_)) {
      // nearest grid value to zero
      double best = g->values.front();
      for (double v : g->values) if (std::abs(v) < std::abs(best)) best = v;
      values_.setConstant(best);
    }
  }
  return values_;
}

void NuisanceUpdater::set_values(const Vec& values) {
  if (series_) throw std::invalid_argument("user-supplied nuisance values need a GP or grid prior");
  if (values.size() != values_.size()) throw std::invalid_argument("set_values: wrong length");
  values_ = values;
}

const Vec& NuisanceUpdater::update(const Vec& z, double noise_var, Rng& rng) {
  if (gram_) {
    values_ = draw_gp_regression(*gram_, z, noise_var, rng);
    return values_;
  }
  if (const auto* g = std::get_if<GridPriorSpec>(&prior_)) {
    values_ = draw_grid_regression(*g, z, noise_var, rng);
    return values_;
  }
  const auto& spec = std::get<WaveletPriorSpec>(prior_);
  Vec resid = z - values_;
  for (int l = 0; l <= series_->max_level; ++l) {
    for (long k = 0; k < (1L << l); ++k) {
      const std::size_t idx = coeff_index(l, k);
      const auto& supp = hats_->support[idx];
      if (supp.empty()) {
        // no data in the support: the conditional is the uniform prior
        const double bound = spec.support_bound(l);
        series_->coeffs[idx] = -bound + 2.0 * bound * uniform01(rng);
        continue;
      }
      int shrinks = 0;
      const double c_new = slice_update_wavelet(*series_, l, k, *hats_, resid, noise_var, spec, rng, &shrinks);
      const double delta = c_new - series_->coeffs[idx];
      series_->coeffs[idx] = c_new;
      for (const auto& [i, psi] : supp) {
        values_(i) += delta * psi;
        resid(i) -= delta * psi;
      }
      ++slice_steps_;
      slice_shrinks_ += shrinks;
    }
  }
  return values_;
}

double NuisanceUpdater::mean_slice_shrinks() const {
  return slice_steps_ ? static_cast<double>(slice_shrinks_) / static_cast<double>(slice_steps_) : 0.0;
}

// ---------------------------------------------------------------------------
// Samplers

namespace {

std::shared_ptr<const GramFactor> shared_gram(const NuisancePrior& a, const NuisancePrior& b,
                                              const Mat& w) {
  const auto* ma = std::get_if<MaternSpec>(&a);
  const auto* mb = std::get_if<MaternSpec>(&b);
  if (!ma || !mb) return nullptr;
  if (ma->alpha != mb->alpha || ma->lengthscale != mb->lengthscale ||
      ma->amplitude != mb->amplitude || ma->jitter != mb->jitter)
    return nullptr;
  return std::make_shared<const GramFactor>(gram_and_factor(w, *ma));
}

Vec initial_beta(const Dataset& data, const ChainConfig& chain, const ModelConfig& model, Rng& rng) {
  const Index d = data.dx();
  Vec beta(d);
  if (chain.init == InitMode::prior_draw) {
    std::uniform_real_distribution<double> u(-model.beta_bound, model.beta_bound);
    for (Index j = 0; j < d; ++j) beta(j) = u(rng);
  } else {
    beta.setZero();
  }
  if (chain.overdispersed_offset != 0.0) {
    // offset from the naive least-squares slope of y on (1, x)
    Mat design(data.n(), d + 1);
    design.col(0).setOnes();
    design.rightCols(d) = data.x;
    const Vec coef = design.colPivHouseholderQr().solve(data.y);
    const Vec resid = data.y - design * coef;
    const double s2 = resid.squaredNorm() / static_cast<double>(std::max<Index>(data.n() - d - 1, 1));
    const Mat cov = s2 * (design.transpose() * design).inverse();
    for (Index j = 0; j < d; ++j)
      beta(j) = coef(j + 1) + chain.overdispersed_offset * std::sqrt(cov(j + 1, j + 1));
    if (chain.beta_update == BetaUpdate::truncated)
      beta = beta.cwiseMax(-model.beta_bound).cwiseMin(model.beta_bound);
  }
  return beta;
}

double initial_xi(const ChainConfig& chain, const ModelConfig& model, Rng& rng) {
  if (model.variance_known) return 1.0 / model.sigma01_sq;
  if (chain.init == InitMode::prior_draw) {
    std::uniform_real_distribution<double> u(model.xi_lower, model.xi_upper);
    return u(rng);
  }
  return std::clamp(1.0 / model.sigma01_sq, model.xi_lower, model.xi_upper);
}

void fill_diagnostics(PosteriorDraws& out) {
  out.diagnostics = {};
  for (Index j = 0; j < out.beta.cols(); ++j) {
    const auto col = out.beta_column(j);
    out.diagnostics.split_psrf.push_back(col.size() >= 4 ? stats::split_psrf(col) : 1.0);
    out.diagnostics.ess.push_back(stats::effective_sample_size(col));
  }
}

class DrawCollector {
 public:
  DrawCollector(const ChainConfig& chain, Index n, Index dx, bool with_xi, bool with_m2)
      : chain_(chain), with_m2_(with_m2) {
    const long kept = chain.retained();
    out_.beta.resize(kept, dx);
    if (with_xi) out_.xi.resize(kept);
    out_.m1_mean = Vec::Zero(n);
    if (with_m2) out_.m2_mean = Mat::Zero(n, dx);
    out_.meta = chain;
  }

  void offer(long iter, const Vec& beta, double xi, const Vec& m1, const Mat* m2) {
    if (iter < chain_.burn_in) return;
    if ((iter - chain_.burn_in) % chain_.thin != 0 || row_ >= out_.beta.rows()) return;
    out_.beta.row(row_) = beta.transpose();
    if (out_.xi.size()) out_.xi(row_) = xi;
    out_.m1_mean += m1;
    if (with_m2_ && m2) out_.m2_mean += *m2;
    if (chain_.store_nuisance) {
      out_.m1.push_back(m1);
      if (with_m2_ && m2) out_.m2.push_back(*m2);
    }
    ++row_;
  }

  PosteriorDraws finish() {
    if (row_ > 0) {
      out_.m1_mean /= static_cast<double>(row_);
      if (with_m2_) out_.m2_mean /= static_cast<double>(row_);
    }
    out_.beta.conservativeResize(row_, Eigen::NoChange);
    if (out_.xi.size()) out_.xi.conservativeResize(row_);
    fill_diagnostics(out_);
    return std::move(out_);
  }

 private:
  const ChainConfig& chain_;
  bool with_m2_;
  PosteriorDraws out_;
  Index row_ = 0;
};

}  // namespace

PosteriorDraws gibbs_beta_m(const Dataset& data, const NuisancePriors& priors,
                            const ChainConfig& chain, const ModelConfig& model) {
  data.validate();
  model.validate();
  chain.validate();
  const Index n = data.n();
  const Index dx = data.dx();
  Rng rng(chain.seed);

  auto gram = shared_gram(priors.m1, priors.m2, data.w);
  NuisanceUpdater m1_block(priors.m1, data.w, gram);
  std::vector<NuisanceUpdater> m2_blocks;
  for (Index j = 0; j < dx; ++j)
    m2_blocks.emplace_back(priors.m2, data.w, gram ? gram : (j > 0 ? m2_blocks.front().gram() : nullptr));

  NuisanceValues m;
  ThetaState theta;
  if (chain.init == InitMode::user) {
    m = *chain.user_m;
    m.check_conforms(data);
    theta = *chain.user_theta;
    m1_block.set_values(m.m1);
    for (Index j = 0; j < dx; ++j) m2_blocks[static_cast<std::size_t>(j)].set_values(m.m2.col(j));
  } else {
    m.m1 = m1_block.initial_values(chain.init, rng);
    m.m2.resize(n, dx);
    for (Index j = 0; j < dx; ++j)
      m.m2.col(j) = m2_blocks[static_cast<std::size_t>(j)].initial_values(chain.init, rng);
    theta.beta = initial_beta(data, chain, model, rng);
    theta.xi = initial_xi(chain, model, rng);
  }
  if (model.variance_known) theta.xi = 1.0 / model.sigma01_sq;

  const std::optional<double> bound =
      chain.beta_update == BetaUpdate::truncated ? std::optional<double>(model.beta_bound) : std::nullopt;
  BetaBlockStats beta_stats;
  long xi_accepts = 0;

  DrawCollector collect(chain, n, dx, !model.variance_known, true);
  for (long iter = 0; iter < chain.n_iter; ++iter) {
    try {
      // (1) m1 | b, m2, xi
      {
        const auto pr = m1_conditional(data, theta.beta, m.m2, theta.xi);
        m.m1 = m1_block.update(pr.z, pr.noise_var, rng);
      }
      // (2) m2 | b, m1, xi, one coordinate at a time
      for (Index k = 0; k < dx; ++k) {
        const auto pr = m2_conditional(data, theta.beta, m.m1, m.m2, k, theta.xi, model.sigma02_sq);
        m.m2.col(k) = m2_blocks[static_cast<std::size_t>(k)].update(pr.z, pr.noise_var, rng);
      }
      // (3) b | m, xi
      {
        const Vec r = data.y - m.m1;
        const Mat s = data.x - m.m2;
        theta.beta = draw_beta_conjugate(r, s, theta.xi, bound, theta.beta, rng, &beta_stats);
      }
      // (4) xi | b, m
      if (!model.variance_known) {
        const double ssr = outcome_residuals(data, theta.beta, m).squaredNorm();
        bool ok = false;
        theta.xi = draw_xi_mh(theta.xi, ssr, n, model.xi_lower, model.xi_upper, rng, &ok);
        xi_accepts += ok;
      }
    } catch (const SliceError& e) {
      throw ChainError(iter, e.what());
    } catch (const std::runtime_error& e) {
      throw ChainError(iter, e.what());
    }
    if (!theta.beta.allFinite() || !m.m1.allFinite() || !m.m2.allFinite())
      throw ChainError(iter, "non-finite state");
    collect.offer(iter, theta.beta, theta.xi, m.m1, &m.m2);
  }

  PosteriorDraws out = collect.finish();
  if (!model.variance_known)
    out.acceptance["xi"] = static_cast<double>(xi_accepts) / static_cast<double>(chain.n_iter);
  if (m1_block.series()) out.acceptance["m1_slice_mean_shrinks"] = m1_block.mean_slice_shrinks();
  if (m2_blocks.front().series()) out.acceptance["m2_slice_mean_shrinks"] = m2_blocks.front().mean_slice_shrinks();
  const double beta_total = static_cast<double>(beta_stats.rejection_draws + beta_stats.inverse_cdf_draws +
                                                beta_stats.coordinate_draws);
  if (beta_total > 0)
    out.acceptance["beta_coordinate_fallback"] = static_cast<double>(beta_stats.coordinate_draws) / beta_total;
  return out;
}

PosteriorDraws gibbs_beta_eta(const Dataset& data, const NuisancePrior& eta_prior,
                              const ChainConfig& chain, const ModelConfig& model) {
  data.validate();
  model.validate();
  chain.validate();
  const Index n = data.n();
  const Index dx = data.dx();
  Rng rng(chain.seed);

  NuisanceUpdater eta_block(eta_prior, data.w);
  Vec eta;
  ThetaState theta;
  if (chain.init == InitMode::user) {
    theta = *chain.user_theta;
    eta = recover_eta(chain.user_m->m1, theta.beta, chain.user_m->m2);
    eta_block.set_values(eta);
  } else {
    eta = eta_block.initial_values(chain.init, rng);
    theta.beta = initial_beta(data, chain, model, rng);
    theta.xi = initial_xi(chain, model, rng);
  }
  if (model.variance_known) theta.xi = 1.0 / model.sigma01_sq;

  const std::optional<double> bound =
      chain.beta_update == BetaUpdate::truncated ? std::optional<double>(model.beta_bound) : std::nullopt;
  BetaBlockStats beta_stats;
  long xi_accepts = 0;

  DrawCollector collect(chain, n, dx, !model.variance_known, false);
  for (long iter = 0; iter < chain.n_iter; ++iter) {
    try {
      eta = eta_block.update(data.y - data.x * theta.beta, 1.0 / theta.xi, rng);
      theta.beta = draw_beta_conjugate(data.y - eta, data.x, theta.xi, bound, theta.beta, rng, &beta_stats);
      if (!model.variance_known) {
        const double ssr = (data.y - data.x * theta.beta - eta).squaredNorm();
        bool ok = false;
        theta.xi = draw_xi_mh(theta.xi, ssr, n, model.xi_lower, model.xi_upper, rng, &ok);
        xi_accepts += ok;
      }
    } catch (const std::runtime_error& e) {
      throw ChainError(iter, e.what());
    }
    if (!theta.beta.allFinite() || !eta.allFinite()) throw ChainError(iter, "non-finite state");
    collect.offer(iter, theta.beta, theta.xi, eta, nullptr);
  }
  PosteriorDraws out = collect.finish();
  if (!model.variance_known)
    out.acceptance["xi"] = static_cast<double>(xi_accepts) / static_cast<double>(chain.n_iter);
  if (eta_block.series()) out.acceptance["eta_slice_mean_shrinks"] = eta_block.mean_slice_shrinks();
  return out;
}

PosteriorDraws sample_reference(const GaussianReference& ref, const ChainConfig& chain,
                                const ModelConfig& model, Index dx) {
  chain.validate();
  Rng rng(chain.seed);
  Eigen::LLT<Mat> llt(ref.covariance);
  if (llt.info() != Eigen::Success) throw std::runtime_error("reference covariance is not positive definite");
  const Mat l = llt.matrixL();
  const long kept = chain.retained();
  PosteriorDraws out;
  out.meta = chain;
  out.beta.resize(kept, dx);
  if (!model.variance_known) out.xi.resize(kept);
  for (long t = 0; t < kept; ++t) {
    Vec z(ref.center.size());
    for (Index j = 0; j < z.size(); ++j) z(j) = std_normal(rng);
    const Vec v = ref.center + l * z;
    out.beta.row(t) = v.head(dx).transpose();
    if (!model.variance_known) out.xi(t) = v(dx);
  }
  fill_diagnostics(out);
  return out;
}

PosteriorDraws run_chain(SamplerId id, const Dataset& data, const SamplerSetup& setup,
                         const ChainConfig& chain, const ModelConfig& model,
                         const GaussianReference* reference) {
  switch (id) {
    case SamplerId::beta_m: return gibbs_beta_m(data, setup.priors, chain, model);
    case SamplerId::beta_eta: return gibbs_beta_eta(data, setup.eta_prior, chain, model);
    case SamplerId::oracle:
      if (!reference) throw std::invalid_argument("oracle sampler needs a Gaussian reference");
      return sample_reference(*reference, chain, model, data.dx());
  }
  throw std::invalid_argument("unknown sampler");
}

double multi_chain_psrf(const std::vector<PosteriorDraws>& chains, Index j) {
  if (chains.size() < 2) throw std::invalid_argument("multi_chain_psrf needs two chains");
  Index len = chains.front().draws();
  for (const auto& c : chains) len = std::min(len, c.draws());
  std::vector<std::vector<double>> cols;
  for (const auto& c : chains) {
    auto col = c.beta_column(j);
    col.resize(static_cast<std::size_t>(len));
    cols.push_back(std::move(col));
  }
  return stats::potential_scale_reduction(cols);
}

}  // namespace plr
