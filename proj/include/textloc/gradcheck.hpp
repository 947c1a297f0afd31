#pragma once

#include <functional>
#include <string>

#include "textloc/tensor.hpp"

namespace textloc::ad {

struct GradCheckResult {
  bool pass = false;
  double max_rel_err = 0.0;
  int worst_index = -1;
  std::string note;
};

/// Central finite differences against an analytic gradient.
/// f must be a pure scalar function of x; step defaults to 1e-5.
/// Relative error per coordinate is |a - n| / max(1, |a|, |n|).
GradCheckResult finite_diff_check(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, const Tensor& analytic,
                                  double tol, double step = 1e-5);

}  // namespace textloc::ad
