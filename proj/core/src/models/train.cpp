#include "lagscope/models/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "lagscope/autodiff/adam.hpp"
#include "lagscope/autodiff/ops.hpp"
#include "lagscope/error.hpp"
#include "lagscope/parallel.hpp"

namespace lagscope::models {

using namespace lagscope::ad;

namespace {

void check_compatible(const SequenceModel& model, const SupervisedDataset& data, const char* what) {
  if (data.empty()) throw Error(std::string(what) + ": dataset is empty");
  if (data.window() != model.config().window || data.n_vars() != model.config().n_vars) {
    throw Error(std::string(what) + ": dataset windows " + std::to_string(data.window()) + "x" +
                std::to_string(data.n_vars()) + " do not match the model's " +
                std::to_string(model.config().window) + "x" + std::to_string(model.config().n_vars));
  }
}

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (epoch + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

void validate(const TrainConfig& config) {
  if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate)) {
    throw Error("train: learning rate must be finite and >= 0");
  }
  if (config.epochs < 1) throw Error("train: epochs must be >= 1");
  if (config.batch_size < 1) throw Error("train: batch size must be >= 1");
}

std::vector<double> predict_all(const SequenceModel& model, const SupervisedDataset& dataset,
                                std::size_t batch_size) {
  check_compatible(model, dataset, "predict");
  if (batch_size < 1) throw Error("predict: batch size must be >= 1");
  const std::size_t n = dataset.size();
  const std::size_t batches = (n + batch_size - 1) / batch_size;
  std::vector<double> out(n);
  parallel_for(batches, [&](std::size_t b) {
    const std::size_t begin = b * batch_size, end = std::min(n, begin + batch_size);
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const Tensor pred = model.predict(dataset.batch_inputs(idx));
    std::copy(pred.values().begin(), pred.values().end(), out.begin() + static_cast<std::ptrdiff_t>(begin));
  });
  return out;
}

double evaluate_mse(const SequenceModel& model, const SupervisedDataset& dataset, std::size_t batch_size) {
  const std::vector<double> pred = predict_all(model, dataset, batch_size);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - dataset[i].target;
    total += e * e;
  }
  return total / static_cast<double>(pred.size());
}

TrainResult train(SequenceModel& model, const SupervisedDataset& train_set, const SupervisedDataset* test_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  validate(config);
  check_compatible(model, train_set, "train");
  if (test_set != nullptr) check_compatible(model, *test_set, "train (test set)");

  std::vector<Parameter>& params = model.parameters();
  std::vector<Tensor*> values;
  for (Parameter& p : params) values.push_back(&p.value);
  AdamState adam;
  adam.learning_rate = config.learning_rate;

  std::vector<std::size_t> order(train_set.size());
  std::vector<Tensor> grads(params.size());
  TrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(epoch_seed(config.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);

    double weighted = 0.0;
    std::size_t seen = 0;
    for (std::size_t begin = 0, batch = 0; begin < order.size(); begin += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      Tape tape;
      Var pred = model.forward(tape, tape.constant(train_set.batch_inputs(idx)));
      Var err = sub(pred, tape.constant(train_set.batch_targets(idx)));
      Var loss = mean(mul(err, err));
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                             std::to_string(batch + 1));
      }
      tape.backward(loss);
      for (std::size_t i = 0; i < params.size(); ++i) grads[i] = tape.parameter_gradient(params[i]);
      adam_step(values, grads, adam);
      weighted += value * static_cast<double>(idx.size());
      seen += idx.size();
    }

    EpochLoss record;
    record.epoch = epoch + 1;
    record.train_mse = weighted / static_cast<double>(seen);
    record.test_mse = test_set != nullptr ? evaluate_mse(model, *test_set, config.batch_size)
                                          : std::numeric_limits<double>::quiet_NaN();
    if (test_set != nullptr && !std::isfinite(record.test_mse)) {
      throw NumericalError("train: non-finite test loss after epoch " + std::to_string(epoch + 1));
    }
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  return result;
}

}  // namespace lagscope::models
