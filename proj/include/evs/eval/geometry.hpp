#pragma once

#include "evs/types.hpp"

namespace evs::eval {

/// Share of the spectrum held by the top singular value, sigma_1^2 / sum sigma_i^2, of the
/// rows of X (mean-centered unless `center` is false). Rotation and scale invariant.
double anisotropy(const MatXd& X, bool center = true);

struct TwoNNResult {
  double dimension = 0.0;
  Eigen::Index points_used = 0;
};

/// TwoNN intrinsic dimension: d = N' / sum ln(r2 / r1) over the exact-deduplicated rows.
TwoNNResult intrinsic_dimension(const MatXd& X);

}  // namespace evs::eval
