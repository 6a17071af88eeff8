#pragma once

#include "plr/core_model.hpp"

namespace plr {

struct SmootherSpec {
  enum class Kind { series, nearest_neighbor };
  Kind kind = Kind::series;
  int level = -1;  // series: < 0 selects ceil(log2(n) / 3)
  int k = -1;      // nearest neighbours: < 0 selects ceil(sqrt(n))
};

/// Fitted values of a nonparametric regression of `values` on the controls.
/// The series smoother is least squares on the hat basis up to `level` plus
/// a linear term (minimum-norm when the design leaves some hats empty) and needs d_w = 1;
/// level 0 reduces to the sample mean.
Vec smooth(const Vec& values, const Mat& w, const SmootherSpec& spec);

int default_series_level(Index n);

}  // namespace plr
