#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lagscope/autodiff/tensor.hpp"

namespace lagscope::ad {

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<Tensor> m;  // first moments, one per parameter
  std::vector<Tensor> v;  // second moments
  std::size_t step = 0;
};

/// One bias-corrected Adam update in place. Moments are created on the first
/// call; later calls must pass the same parameter list.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state);

}  // namespace lagscope::ad
