#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "lagscope/autodiff/tape.hpp"

namespace lagscope::ad {

/// Builds a scalar loss on `tape` from the bound inputs.
using ScalarFunction = std::function<Var(Tape& tape, const std::vector<Var>& inputs)>;

struct GradcheckOptions {
  double step = 1e-5;
  /// Coordinates probed per input; 0 probes every coordinate.
  std::size_t probes_per_input = 0;
  /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-5;
  std::uint64_t seed = 0;
};

struct GradcheckResult {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t probes = 0;
  /// Probes redrawn because the stencil x +- step crossed a relu/abs kink,
  /// where central differences do not estimate the derivative.
  std::size_t kinks_skipped = 0;
};

/// Compares reverse-mode gradients against central finite differences.
/// A probe whose stencil changes the relu/abs branch pattern is replaced by
/// another coordinate (up to 20 tries per probe).
GradcheckResult gradcheck(const ScalarFunction& f, const std::vector<Tensor>& inputs,
                          const GradcheckOptions& options = {});

/// Same comparison for parameters bound by `loss` through Tape::parameter.
/// Probes `total_probes` coordinates drawn uniformly over all parameters;
/// values are restored afterwards.
GradcheckResult gradcheck_parameters(std::vector<Parameter*> params, const std::function<Var(Tape&)>& loss,
                                     std::size_t total_probes, const GradcheckOptions& options = {});

double relative_error(double analytic, double numeric, double floor);

}  // namespace lagscope::ad
