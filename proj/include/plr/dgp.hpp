#pragma once

// Synthetic data for the partially linear model and data-side checks of the
// distributional assumptions.

#include "plr/core_model.hpp"
#include "plr/priors.hpp"
#include "plr/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

namespace plr {

/// Truth built from the hierarchical hat series, applied to the first control
/// coordinate. alpha0 and M record the Holder ball the coefficients were drawn in.
struct SeriesTruth {
  SeriesFunction series;
  double alpha0 = 1.0;
  double M = 1.0;
};

/// Closed-form truth of the control mean wbar = mean_j w_j.
struct ClosedFormTruth {
  enum class Kind { zero, constant, linear, sine };
  Kind kind = Kind::zero;
  double amplitude = 1.0;
  double frequency = 1.0;
};

using FunctionSpec = std::variant<SeriesTruth, ClosedFormTruth>;

double eval_function_at(const FunctionSpec& f, const Eigen::Ref<const Eigen::RowVectorXd>& w);
Vec eval_function(const FunctionSpec& f, const Mat& w);

struct TrueFunctions {
  // When first_is_eta is false, `first` is m01 and eta0 = m01 - m02'beta0.
  // Otherwise `first` is eta0 and m01 = eta0 + m02'beta0.
  FunctionSpec first = ClosedFormTruth{};
  bool first_is_eta = false;
  std::vector<FunctionSpec> m02;  // one per coordinate of X
  Vec beta0;
  double sigma01_sq = 1.0;
  double sigma02_sq = 1.0;

  Index dx() const { return static_cast<Index>(m02.size()); }
  void validate() const;

  Mat m02_values(const Mat& w) const;
  Vec m01_values(const Mat& w) const;
  Vec eta0_values(const Mat& w) const;
  NuisanceValues nuisance_values(const Mat& w) const;
};

enum class ErrorFamily { gaussian, scaled_uniform, scaled_laplace_truncated };
enum class WLaw { uniform, tilted };

struct DgpSpec {
  Index n = 500;
  Index dx = 1;
  Index dw = 1;
  ErrorFamily error_family = ErrorFamily::gaussian;
  WLaw w_law = WLaw::uniform;
  std::uint64_t seed = 1;

  void validate() const;
};

std::string to_string(ErrorFamily e);
std::string to_string(WLaw w);
ErrorFamily parse_error_family(const std::string& s);
WLaw parse_w_law(const std::string& s);

/// c_lk = 2^{-l(alpha0+1/2)} u_lk with u_lk ~ Uniform[-M, M], levels 0..level_cap.
SeriesFunction make_holder_function(double alpha0, double M, int level_cap, std::uint64_t seed);

/// Mean-zero error with variance `var` from the given family.
double draw_error(ErrorFamily family, double var, Rng& rng);

/// Draw W from w_law, X = m02(W) + e2, Y = m01(W) + (X - m02(W))'beta0 + U.
Dataset simulate(const DgpSpec& spec, const TrueFunctions& truth);

struct AssumptionReport {
  Index n = 0;
  bool used_truth = false;  // m02 known, otherwise estimated by a smoother
  double min_eigenvalue = 0.0;  // of (1/n) sum (x - m2)(x - m2)'
  double max_eigenvalue = 0.0;
  double c_lower = 1e-2;
  double c_upper = 1e2;
  bool eigen_in_band = false;
  std::vector<double> fourth_moments;  // per coordinate of the projection error
  bool fourth_moments_finite = false;
  double degenerate_ratio = 0.0;  // min eigenvalue / mean squared centered x
  bool degenerate_design = false;
  std::string untestable =
      "density and log-moment condition on p0(Y,X|W) are not checkable from data";
};

struct AssumptionOptions {
  double c_lower = 1e-2;
  double c_upper = 1e2;
  double degenerate_rel_tol = 1e-6;
};

AssumptionReport validate_assumptions(const Dataset& data, const TrueFunctions* truth,
                                      const AssumptionOptions& options = {});

// ---------------------------------------------------------------------------
// CSV exchange: header "y,x1..x_dx,w1..w_dw", '.' decimal separator.

void write_dataset_csv(std::ostream& os, const Dataset& data);
Dataset read_dataset_csv(std::istream& is);

/// Affine map of each control column onto [0, 1] (min to 0, max to 1).
Mat rescale_unit_cube(const Mat& w);

}  // namespace plr
