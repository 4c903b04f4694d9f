#include "lagscope/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "lagscope/autodiff/ops.hpp"
#include "lagscope/models/model.hpp"

namespace lagscope {

using namespace lagscope::ad;

namespace {

// Central differences carry an h^2 f''' / 6 truncation term; BCE's third
// derivative grows like 1/p^3, so predictions stay in the middle of (0, 1).
enum class Domain { real, away_from_zero, probability, mid_probability };

struct InputSpec {
  Shape shape;
  Domain domain = Domain::real;
};

using OpFn = std::function<Var(const std::vector<Var>&)>;

Tensor draw(const InputSpec& spec, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  std::uniform_real_distribution<double> mid(0.3, 0.7);
  Tensor t(spec.shape);
  for (double& v : t.values()) {
    switch (spec.domain) {
      case Domain::real: v = normal(rng); break;
      case Domain::away_from_zero: {
        const double z = normal(rng);
        v = std::copysign(0.1 + std::fabs(z), z);
        break;
      }
      case Domain::probability: v = unit(rng); break;
      case Domain::mid_probability: v = mid(rng); break;
    }
  }
  return t;
}

void merge(GradcheckResult& into, const GradcheckResult& r) {
  into.max_relative_error = std::max(into.max_relative_error, r.max_relative_error);
  into.max_absolute_error = std::max(into.max_absolute_error, r.max_absolute_error);
  into.probes += r.probes;
  into.kinks_skipped += r.kinks_skipped;
}

// Output weighted by a fixed random tensor so every output element matters.
GradcheckCase check_op(const std::string& name, const std::vector<InputSpec>& specs, const OpFn& op,
                       const GradcheckSuiteOptions& o, std::mt19937_64& rng) {
  GradcheckCase out{name, {}};
  GradcheckOptions go;
  go.step = o.step;
  go.floor = o.floor;
  go.probes_per_input = 4;
  for (std::size_t d = 0; d < o.points; ++d) {
    std::vector<Tensor> inputs;
    for (const InputSpec& s : specs) inputs.push_back(draw(s, rng));
    Tensor weights;
    {
      Tape probe;
      std::vector<Var> vars;
      for (const Tensor& t : inputs) vars.push_back(probe.constant(t));
      weights = draw({op(vars).shape(), Domain::real}, rng);
    }
    go.seed = rng();
    const ScalarFunction f = [&](Tape& tape, const std::vector<Var>& vars) {
      return sum(mul(op(vars), tape.constant(weights)));
    };
    merge(out.result, gradcheck(f, inputs, go));
  }
  return out;
}

models::ModelConfig small_config(models::ModelKind kind) {
  models::ModelConfig c;
  c.kind = kind;
  c.n_vars = 3;
  c.window = 6;
  c.hidden = 8;
  if (kind == models::ModelKind::imv_lstm) c.hidden = 4;
  if (kind == models::ModelKind::rhn) c.rhn_depth = 3;
  if (kind == models::ModelKind::tcn) {
    c.window = 16;
    c.tcn.channels = 4;
    c.tcn.kernel_size = 3;
  }
  return c;
}

GradcheckCase check_model(const std::string& name, const models::ModelConfig& config, const GradcheckSuiteOptions& o,
                          std::mt19937_64& rng) {
  auto model = models::make_model(config, rng());
  const Tensor windows = draw({{3, config.window, config.n_vars}, Domain::real}, rng);
  const Tensor weights = draw({{3}, Domain::real}, rng);
  GradcheckOptions go;
  go.step = o.step;
  go.floor = o.floor;
  go.seed = rng();

  std::vector<Parameter*> params;
  for (Parameter& p : model->parameters()) params.push_back(&p);
  GradcheckCase out{name, {}};
  merge(out.result, gradcheck_parameters(
                        params,
                        [&](Tape& tape) {
                          return sum(mul(model->forward(tape, tape.constant(windows)), tape.constant(weights)));
                        },
                        o.points, go));
  go.probes_per_input = std::max<std::size_t>(1, o.points / 5);
  merge(out.result, gradcheck(
                        [&](Tape& tape, const std::vector<Var>& vars) {
                          return sum(mul(model->forward(tape, vars[0]), tape.constant(weights)));
                        },
                        {windows}, go));
  return out;
}

}  // namespace

std::vector<GradcheckCase> run_gradcheck_suite(const GradcheckSuiteOptions& o) {
  std::mt19937_64 rng(o.seed);
  std::vector<GradcheckCase> cases;
  auto op = [&](const std::string& name, std::vector<InputSpec> specs, OpFn fn) {
    cases.push_back(check_op(name, specs, fn, o, rng));
  };
  const Domain R = Domain::real;
  op("matmul", {{{3, 4}, R}, {{4, 2}, R}}, [](const auto& v) { return matmul(v[0], v[1]); });
  op("add", {{{3, 4}, R}, {{4}, R}}, [](const auto& v) { return add(v[0], v[1]); });
  op("subtract", {{{3, 4}, R}, {{3, 4}, R}}, [](const auto& v) { return sub(v[0], v[1]); });
  op("hadamard", {{{2, 3, 4}, R}, {{3, 4}, R}}, [](const auto& v) { return mul(v[0], v[1]); });
  op("scale", {{{5}, R}}, [](const auto& v) { return scale(v[0], -1.7); });
  op("add_scalar", {{{5}, R}}, [](const auto& v) { return add_scalar(v[0], 0.3); });
  op("sigmoid", {{{2, 5}, R}}, [](const auto& v) { return sigmoid(v[0]); });
  op("tanh", {{{2, 5}, R}}, [](const auto& v) { return tanh(v[0]); });
  op("relu", {{{2, 5}, Domain::away_from_zero}}, [](const auto& v) { return relu(v[0]); });
  op("abs", {{{2, 5}, Domain::away_from_zero}}, [](const auto& v) { return abs(v[0]); });
  op("sum", {{{2, 5}, R}}, [](const auto& v) { return sum(v[0]); });
  op("mean", {{{2, 5}, R}}, [](const auto& v) { return mean(v[0]); });
  op("concat", {{{2, 3}, R}, {{2, 2}, R}}, [](const auto& v) { return concat({v[0], v[1]}, 1); });
  op("slice", {{{3, 5}, R}}, [](const auto& v) { return slice(v[0], 1, 1, 3); });
  op("reshape", {{{2, 6}, R}}, [](const auto& v) { return reshape(v[0], {3, 4}); });
  op("transpose", {{{2, 3, 4}, R}}, [](const auto& v) { return transpose(v[0]); });
  op("reverse", {{{2, 5}, R}}, [](const auto& v) { return reverse(v[0], 1); });
  op("softmax", {{{2, 4}, R}}, [](const auto& v) { return softmax(v[0]); });
  op("binary_cross_entropy", {{{2, 4}, Domain::probability}, {{2, 4}, Domain::mid_probability}},
     [](const auto& v) { return binary_cross_entropy(v[0], v[1]); });
  op("conv1d_dilated_causal", {{{2, 3, 10}, R}, {{4, 3, 3}, R}, {{4}, R}},
     [](const auto& v) { return conv1d_dilated_causal(v[0], v[1], v[2], 2); });
  op("blockwise_matvec", {{{3, 4, 2}, R}, {{2, 3, 2}, R}}, [](const auto& v) { return blockwise_matvec(v[0], v[1]); });
  op("batch_weighted_sum", {{{2, 3}, R}, {{2, 3, 4}, R}},
     [](const auto& v) { return batch_weighted_sum(v[0], v[1]); });

  using models::ModelKind;
  for (ModelKind kind : {ModelKind::lstm, ModelKind::gru, ModelKind::imv_lstm, ModelKind::antisymmetric_rnn,
                         ModelKind::rhn, ModelKind::tcn}) {
    cases.push_back(check_model("model:" + models::to_string(kind), small_config(kind), o, rng));
  }
  using models::TcnVariant;
  for (TcnVariant v : {TcnVariant::output_attention, TcnVariant::layerwise_attention, TcnVariant::stack,
                       TcnVariant::bidirectional}) {
    models::ModelConfig c = small_config(ModelKind::tcn);
    c.tcn.variant = v;
    cases.push_back(check_model("model:tcn/" + models::to_string(v), c, o, rng));
  }
  return cases;
}

}  // namespace lagscope
