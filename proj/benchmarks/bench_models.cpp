#include <benchmark/benchmark.h>

#include <random>

#include "lagscope/autodiff/ops.hpp"
#include "lagscope/models/model.hpp"

using namespace lagscope;
using namespace lagscope::ad;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = normal(rng);
  return t;
}

void BM_Conv1dForwardBackward(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  const auto length = static_cast<std::size_t>(state.range(1));
  const Tensor x = random_tensor({32, channels, length}, 1);
  const Tensor w = random_tensor({channels, channels, 7}, 2);
  for (auto _ : state) {
    Tape tape;
    Var out = conv1d_dilated_causal(tape.variable(x), tape.variable(w), 4);
    tape.backward(sum(out));
    benchmark::DoNotOptimize(tape.gradient(out));
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_Conv1dForwardBackward)->Args({16, 64})->Args({16, 128});

void run_model(benchmark::State& state, models::ModelKind kind, std::size_t window, std::size_t n_vars) {
  models::ModelConfig config;
  config.kind = kind;
  config.window = window;
  config.n_vars = n_vars;
  const auto model = models::make_model(config, 7);
  const Tensor batch = random_tensor({32, window, n_vars}, 3);
  for (auto _ : state) {
    Tape tape;
    Var loss = mean(model->forward(tape, tape.constant(batch)));
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.parameter_gradient(model->parameters().front()));
  }
  state.SetItemsProcessed(state.iterations() * 32);
}

void BM_TcnTrainStep(benchmark::State& state) {
  run_model(state, models::ModelKind::tcn, static_cast<std::size_t>(state.range(0)),
            static_cast<std::size_t>(state.range(1)));
}
BENCHMARK(BM_TcnTrainStep)->Args({64, 2})->Args({128, 6});

void BM_LstmTrainStep(benchmark::State& state) { run_model(state, models::ModelKind::lstm, 64, 2); }
BENCHMARK(BM_LstmTrainStep);

void BM_GruTrainStep(benchmark::State& state) { run_model(state, models::ModelKind::gru, 64, 2); }
BENCHMARK(BM_GruTrainStep);

}  // namespace

BENCHMARK_MAIN();
