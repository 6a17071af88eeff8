#include "plr/dgp.hpp"

#include "plr/smoothing.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace plr {

namespace {

// Laplace(0, b) truncated at |e| <= kLaplaceCut * b.
constexpr double kLaplaceCut = 4.0;

double truncated_laplace_unit_sd() {
  const double t = kLaplaceCut;
  const double et = std::exp(-t);
  return std::sqrt((2.0 - et * (t * t + 2.0 * t + 2.0)) / (1.0 - et));
}

double draw_w_coordinate(WLaw law, Rng& rng) {
  const double u = uniform01(rng);
  if (law == WLaw::uniform) return u;
  // density 1/2 + w on [0, 1]: half uniform, half with density 2w
  if (uniform01(rng) < 0.5) return u;
  return std::sqrt(u);
}

}  // namespace

double eval_function_at(const FunctionSpec& f, const Eigen::Ref<const Eigen::RowVectorXd>& w) {
  if (const auto* s = std::get_if<SeriesTruth>(&f)) return series_eval(s->series, w(0));
  const auto& c = std::get<ClosedFormTruth>(f);
  const double wbar = w.mean();
  switch (c.kind) {
    case ClosedFormTruth::Kind::zero: return 0.0;
    case ClosedFormTruth::Kind::constant: return c.amplitude;
    case ClosedFormTruth::Kind::linear: return c.amplitude * wbar;
    case ClosedFormTruth::Kind::sine:
      return c.amplitude * std::sin(2.0 * std::numbers::pi * c.frequency * wbar);
  }
  return 0.0;
}

Vec eval_function(const FunctionSpec& f, const Mat& w) {
  Vec out(w.rows());
  for (Index i = 0; i < w.rows(); ++i) out(i) = eval_function_at(f, w.row(i));
  return out;
}

void TrueFunctions::validate() const {
  if (m02.empty()) throw std::invalid_argument("truth: m02 needs one function per X coordinate");
  if (beta0.size() != dx()) throw std::invalid_argument("truth: beta0 has wrong dimension");
  if (!(sigma01_sq > 0.0) || !(sigma02_sq > 0.0))
    throw std::invalid_argument("truth: variances must be positive");
}

Mat TrueFunctions::m02_values(const Mat& w) const {
  Mat out(w.rows(), dx());
  for (Index j = 0; j < dx(); ++j) out.col(j) = eval_function(m02[static_cast<std::size_t>(j)], w);
  return out;
}

Vec TrueFunctions::m01_values(const Mat& w) const {
  const Vec first_values = eval_function(first, w);
  if (!first_is_eta) return first_values;
  return robinson_decompose(first_values, beta0, m02_values(w));
}

Vec TrueFunctions::eta0_values(const Mat& w) const {
  const Vec first_values = eval_function(first, w);
  if (first_is_eta) return first_values;
  return recover_eta(first_values, beta0, m02_values(w));
}

NuisanceValues TrueFunctions::nuisance_values(const Mat& w) const {
  return NuisanceValues{m01_values(w), m02_values(w)};
}

void DgpSpec::validate() const {
  if (n < 2) throw std::invalid_argument("dgp: n must be at least 2");
  if (dx < 1 || dw < 1) throw std::invalid_argument("dgp: dimensions must be positive");
}

std::string to_string(ErrorFamily e) {
  switch (e) {
    case ErrorFamily::gaussian: return "gaussian";
    case ErrorFamily::scaled_uniform: return "scaled-uniform";
    case ErrorFamily::scaled_laplace_truncated: return "scaled-laplace-truncated";
  }
  return "?";
}

std::string to_string(WLaw w) { return w == WLaw::uniform ? "uniform" : "tilted"; }

ErrorFamily parse_error_family(const std::string& s) {
  if (s == "gaussian") return ErrorFamily::gaussian;
  if (s == "scaled-uniform") return ErrorFamily::scaled_uniform;
  if (s == "scaled-laplace-truncated") return ErrorFamily::scaled_laplace_truncated;
  throw std::invalid_argument("unknown error family '" + s + "'");
}

WLaw parse_w_law(const std::string& s) {
  if (s == "uniform") return WLaw::uniform;
  if (s == "tilted") return WLaw::tilted;
  throw std::invalid_argument("unknown w law '" + s + "'");
}

SeriesFunction make_holder_function(double alpha0, double M, int level_cap, std::uint64_t seed) {
  if (!(alpha0 > 0.0) || !(M > 0.0) || level_cap < 0)
    throw std::invalid_argument("make_holder_function: need alpha0 > 0, M > 0, L >= 0");
  Rng rng(seed);
  return sample_wavelet_prior(WaveletPriorSpec{alpha0, M, level_cap}, level_cap, rng);
}

double draw_error(ErrorFamily family, double var, Rng& rng) {
  const double sd = std::sqrt(var);
  switch (family) {
    case ErrorFamily::gaussian:
      return sd * std_normal(rng);
    case ErrorFamily::scaled_uniform:
      return sd * std::sqrt(3.0) * (2.0 * uniform01(rng) - 1.0);
    case ErrorFamily::scaled_laplace_truncated: {
      // inverse CDF of |e| ~ Exp(1) truncated to [0, cut], random sign
      const double cut_mass = 1.0 - std::exp(-kLaplaceCut);
      const double a = -std::log(1.0 - uniform01(rng) * cut_mass);
      const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
      return sd * sign * a / truncated_laplace_unit_sd();
    }
  }
  return 0.0;
}

Dataset simulate(const DgpSpec& spec, const TrueFunctions& truth) {
  spec.validate();
  truth.validate();
  if (truth.dx() != spec.dx) throw std::invalid_argument("simulate: truth and spec disagree on d_x");

  Rng rng(spec.seed);
  Dataset d;
  d.w.resize(spec.n, spec.dw);
  for (Index i = 0; i < spec.n; ++i)
    for (Index j = 0; j < spec.dw; ++j) d.w(i, j) = draw_w_coordinate(spec.w_law, rng);

  const NuisanceValues m0 = truth.nuisance_values(d.w);
  d.x.resize(spec.n, spec.dx);
  d.y.resize(spec.n);
  for (Index i = 0; i < spec.n; ++i) {
    for (Index j = 0; j < spec.dx; ++j)
      d.x(i, j) = m0.m2(i, j) + draw_error(spec.error_family, truth.sigma02_sq, rng);
    const double u = draw_error(spec.error_family, truth.sigma01_sq, rng);
    d.y(i) = m0.m1(i) + (d.x.row(i) - m0.m2.row(i)).dot(truth.beta0) + u;
  }
  return d;
}

AssumptionReport validate_assumptions(const Dataset& data, const TrueFunctions* truth,
                                      const AssumptionOptions& options) {
  if (data.n() < 2) throw std::invalid_argument("validate_assumptions: n must be at least 2");
  AssumptionReport rep;
  rep.n = data.n();
  rep.c_lower = options.c_lower;
  rep.c_upper = options.c_upper;
  rep.used_truth = truth != nullptr;

  Mat m2hat(data.n(), data.dx());
  if (truth) {
    m2hat = truth->m02_values(data.w);
  } else {
    SmootherSpec sm;
    if (data.dw() > 1) sm.kind = SmootherSpec::Kind::nearest_neighbor;
    for (Index j = 0; j < data.dx(); ++j) m2hat.col(j) = smooth(data.x.col(j), data.w, sm);
  }
  const Mat s = data.x - m2hat;
  const double n = static_cast<double>(data.n());
  const Mat second = s.transpose() * s / n;
  Eigen::SelfAdjointEigenSolver<Mat> eig(second);
  rep.min_eigenvalue = eig.eigenvalues().minCoeff();
  rep.max_eigenvalue = eig.eigenvalues().maxCoeff();
  rep.eigen_in_band = rep.min_eigenvalue >= options.c_lower && rep.max_eigenvalue <= options.c_upper;

  rep.fourth_moments_finite = true;
  for (Index j = 0; j < data.dx(); ++j) {
    const double m4 = s.col(j).array().pow(4).mean();
    rep.fourth_moments.push_back(m4);
    rep.fourth_moments_finite = rep.fourth_moments_finite && std::isfinite(m4);
  }

  const Mat centered = data.x.rowwise() - data.x.colwise().mean();
  const double scale = std::max(centered.squaredNorm() / (n * static_cast<double>(data.dx())),
                                std::numeric_limits<double>::min());
  rep.degenerate_ratio = rep.min_eigenvalue / scale;
  rep.degenerate_design = rep.degenerate_ratio <= options.degenerate_rel_tol;
  return rep;
}

void write_dataset_csv(std::ostream& os, const Dataset& data) {
  os << "y";
  for (Index j = 0; j < data.dx(); ++j) os << ",x" << j + 1;
  for (Index j = 0; j < data.dw(); ++j) os << ",w" << j + 1;
  os << '\n';
  std::ostringstream line;
  line.imbue(std::locale::classic());
  line << std::setprecision(17);
  for (Index i = 0; i < data.n(); ++i) {
    line.str("");
    line << data.y(i);
    for (Index j = 0; j < data.dx(); ++j) line << ',' << data.x(i, j);
    for (Index j = 0; j < data.dw(); ++j) line << ',' << data.w(i, j);
    os << line.str() << '\n';
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("CSV: missing header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const auto header = split_csv_line(line);
  if (header.empty() || header[0] != "y")
    throw std::runtime_error("CSV schema mismatch: first column must be 'y'");
  Index dx = 0, dw = 0;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const std::string expected_x = "x" + std::to_string(dx + 1);
    const std::string expected_w = "w" + std::to_string(dw + 1);
    if (dw == 0 && header[c] == expected_x) {
      ++dx;
    } else if (header[c] == expected_w) {
      ++dw;
    } else {
      throw std::runtime_error("CSV schema mismatch: unexpected column '" + header[c] +
                               "' at position " + std::to_string(c + 1) + " (expected '" +
                               (dw == 0 ? expected_x + "' or '" : std::string()) + expected_w +
                               "')");
    }
  }
  if (dx == 0 || dw == 0) throw std::runtime_error("CSV schema mismatch: need x1.. and w1.. columns");

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("CSV line " + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(cells.size()));
    std::vector<double> row;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      const char* first = cells[c].data();
      const char* last = first + cells[c].size();
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last)
        throw std::runtime_error("CSV line " + std::to_string(line_no) + ", column '" +
                                 header[c] + "': cannot parse '" + cells[c] + "'");
      if (!std::isfinite(v))
        throw std::runtime_error("CSV line " + std::to_string(line_no) + ", column '" +
                                 header[c] + "': NaN/Inf not allowed");
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  const Index n = static_cast<Index>(rows.size());
  Dataset d;
  d.y.resize(n);
  d.x.resize(n, dx);
  d.w.resize(n, dw);
  for (Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    d.y(i) = r[0];
    for (Index j = 0; j < dx; ++j) d.x(i, j) = r[static_cast<std::size_t>(1 + j)];
    for (Index j = 0; j < dw; ++j) d.w(i, j) = r[static_cast<std::size_t>(1 + dx + j)];
  }
  d.validate();
  return d;
}

Mat rescale_unit_cube(const Mat& w) {
  Mat out = w;
  for (Index j = 0; j < w.cols(); ++j) {
    const double lo = w.col(j).minCoeff();
    const double hi = w.col(j).maxCoeff();
    if (hi > lo) {
      out.col(j) = (w.col(j).array() - lo) / (hi - lo);
    } else {
      out.col(j).setConstant(0.5);
    }
  }
  return out;
}

}  // namespace plr
