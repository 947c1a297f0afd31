#include "textloc/adam.hpp"

#include <cmath>

namespace textloc::ad {

void adam_step(ParamStore& params, const GradMap& grads, AdamState& state,
               double lr) {
  require(lr > 0.0, "adam_step: learning rate must be positive, got ", lr);
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    require(p.same_shape(g), "adam_step: gradient shape ", shape_str(g.shape),
            " != parameter shape ", shape_str(p.shape), " for '", name, "'");
    require(g.all_finite(), "adam_step: non-finite gradient for parameter '",
            name, "'");
    auto mit = state.m.find(name);
    if (mit == state.m.end()) {
      mit = state.m.emplace(name, Tensor(p.shape, 0.0)).first;
      state.v.emplace(name, Tensor(p.shape, 0.0));
    }
    Tensor& m = mit->second;
    Tensor& v = state.v.at(name);
    for (int i = 0; i < p.numel(); ++i) {
      m.at(i) = state.beta1 * m.at(i) + (1.0 - state.beta1) * g.at(i);
      v.at(i) = state.beta2 * v.at(i) + (1.0 - state.beta2) * g.at(i) * g.at(i);
      const double mhat = m.at(i) / bc1;
      const double vhat = v.at(i) / bc2;
      p.at(i) -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace textloc::ad
