#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lagscope/autodiff/gradcheck.hpp"

namespace lagscope {

struct GradcheckSuiteOptions {
  std::uint64_t seed = 0;
  /// Random input draws per op, probed coordinates per model.
  std::size_t points = 100;
  double step = 1e-5;
  double floor = 1e-5;
};

struct GradcheckCase {
  std::string name;
  ad::GradcheckResult result;
};

/// Finite-difference checks of every autodiff op and of every model family
/// (gradients with respect to parameters and to the input windows).
std::vector<GradcheckCase> run_gradcheck_suite(const GradcheckSuiteOptions& options = {});

}  // namespace lagscope
