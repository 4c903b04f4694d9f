#include "lagscope/autodiff/adam.hpp"

#include <cmath>

#include "lagscope/error.hpp"

namespace lagscope::ad {

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state) {
  if (params.size() != grads.size()) {
    throw Error("adam_step: " + std::to_string(params.size()) + " parameters but " +
                std::to_string(grads.size()) + " gradients");
  }
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape(), 0.0);
      state.v.emplace_back(p->shape(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw Error("adam_step: parameter list changed between steps");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = grads[k];
    if (g.shape() != p.shape()) {
      throw Error("adam_step: gradient shape " + shape_string(g.shape()) + " != parameter shape " +
                  shape_string(p.shape()));
    }
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace lagscope::ad
