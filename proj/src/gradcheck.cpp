#include "textloc/gradcheck.hpp"

#include <cmath>

namespace textloc::ad {

GradCheckResult finite_diff_check(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, const Tensor& analytic,
                                  double tol, double step) {
  GradCheckResult res;
  if (!analytic.same_shape(x)) {
    res.note = "analytic gradient shape " + shape_str(analytic.shape) +
               " != input shape " + shape_str(x.shape);
    return res;
  }
  res.pass = true;
  Tensor probe = x;
  for (int i = 0; i < x.numel(); ++i) {
    const double orig = probe.at(i);
    probe.at(i) = orig + step;
    const double fp = f(probe);
    probe.at(i) = orig - step;
    const double fm = f(probe);
    probe.at(i) = orig;
    const double numeric = (fp - fm) / (2.0 * step);
    const double a = analytic.at(i);
    if (!std::isfinite(numeric) || !std::isfinite(a)) {
      res.pass = false;
      res.max_rel_err = INFINITY;
      res.worst_index = i;
      res.note = "non-finite comparison at index " + std::to_string(i);
      return res;
    }
    const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
    const double rel = std::fabs(a - numeric) / denom;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_index = i;
    }
  }
  res.pass = res.max_rel_err < tol;
  return res;
}

}  // namespace textloc::ad
