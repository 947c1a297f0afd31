#pragma once

#include "textloc/params.hpp"

namespace textloc::ad {

/// Adam optimizer state; moment tensors are keyed and shaped like the
/// parameters they track.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long long step = 0;
  GradMap m;
  GradMap v;
};

/// One Adam update with bias correction. Parameters without a gradient entry
/// are left untouched. Throws if any gradient is non-finite, naming the
/// parameter.
void adam_step(ParamStore& params, const GradMap& grads, AdamState& state, double lr);

}  // namespace textloc::ad
