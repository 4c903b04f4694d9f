#include "lagscope/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lagscope/error.hpp"

namespace lagscope::ad {
namespace {

constexpr std::size_t kTriesPerProbe = 20;

struct Sample {
  double value;
  std::uint64_t signature;
};

Sample evaluate(const ScalarFunction& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  tape.track_branches(true);
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
  const double v = f(tape, vars).value().item();
  return {v, tape.branch_signature()};
}

Sample evaluate(const std::function<Var(Tape&)>& loss) {
  Tape tape(Tape::ParameterMode::frozen);
  tape.track_branches(true);
  const double v = loss(tape).value().item();
  return {v, tape.branch_signature()};
}

// Central difference at one coordinate; false when the stencil crosses a kink.
template <class Eval>
bool central_difference(double& cell, double step, std::uint64_t base_signature, const Eval& eval, double& out) {
  const double original = cell;
  cell = original + step;
  const Sample up = eval();
  cell = original - step;
  const Sample down = eval();
  cell = original;
  if (up.signature != base_signature || down.signature != base_signature) return false;
  out = (up.value - down.value) / (2.0 * step);
  return true;
}

void record(GradcheckResult& r, double analytic, double numeric, double floor) {
  r.max_relative_error = std::max(r.max_relative_error, relative_error(analytic, numeric, floor));
  r.max_absolute_error = std::max(r.max_absolute_error, std::fabs(analytic - numeric));
  ++r.probes;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
  return std::fabs(analytic - numeric) / denom;
}

GradcheckResult gradcheck(const ScalarFunction& f, const std::vector<Tensor>& inputs,
                          const GradcheckOptions& options) {
  Tape tape;
  tape.track_branches(true);
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
  Var loss = f(tape, vars);
  const std::uint64_t base = tape.branch_signature();
  tape.backward(loss);

  std::mt19937_64 rng(options.seed);
  GradcheckResult result;
  std::vector<Tensor> probe = inputs;
  auto eval = [&] { return evaluate(f, probe); };
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = tape.gradient(vars[k]);
    std::vector<std::size_t> coords(inputs[k].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    std::shuffle(coords.begin(), coords.end(), rng);
    const std::size_t wanted = options.probes_per_input ? std::min(options.probes_per_input, coords.size())
                                                        : coords.size();
    std::size_t accepted = 0;
    for (std::size_t i : coords) {
      if (accepted == wanted) break;
      double numeric = 0.0;
      if (!central_difference(probe[k][i], options.step, base, eval, numeric)) {
        ++result.kinks_skipped;
        continue;
      }
      record(result, analytic[i], numeric, options.floor);
      ++accepted;
    }
  }
  return result;
}

GradcheckResult gradcheck_parameters(std::vector<Parameter*> params, const std::function<Var(Tape&)>& loss,
                                     std::size_t total_probes, const GradcheckOptions& options) {
  std::vector<Tensor> analytic;
  std::uint64_t base = 0;
  {
    Tape tape;
    tape.track_branches(true);
    Var l = loss(tape);
    base = tape.branch_signature();
    tape.backward(l);
    for (Parameter* p : params) analytic.push_back(tape.parameter_gradient(*p));
  }
  std::size_t total = 0;
  for (Parameter* p : params) total += p->value.size();
  if (total == 0) throw Error("gradcheck_parameters: no parameters");

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  auto eval = [&] { return evaluate(loss); };
  GradcheckResult result;
  for (std::size_t n = 0; n < total_probes; ++n) {
    for (std::size_t attempt = 0; attempt < kTriesPerProbe; ++attempt) {
      std::size_t flat = pick(rng), k = 0;
      while (flat >= params[k]->value.size()) flat -= params[k++]->value.size();
      double numeric = 0.0;
      if (!central_difference(params[k]->value[flat], options.step, base, eval, numeric)) {
        ++result.kinks_skipped;
        continue;
      }
      record(result, analytic[k][flat], numeric, options.floor);
      break;
    }
  }
  return result;
}

}  // namespace lagscope::ad
