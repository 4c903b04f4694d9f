#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lagscope/models/model.hpp"
#include "lagscope/series.hpp"

namespace lagscope::models {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& config);

struct EpochLoss {
  std::size_t epoch = 0;
  double train_mse = 0.0;  // sample-weighted mean of the batch losses seen during the epoch
  double test_mse = 0.0;   // after the epoch; NaN when no test set was given
};

struct TrainResult {
  std::vector<EpochLoss> history;
};

using EpochCallback = std::function<void(const EpochLoss&)>;

/// Mini-batch MSE with Adam. Batches are reshuffled every epoch from
/// (seed, epoch), so a run is reproducible from its config alone.
/// Throws NumericalError naming the epoch and batch on a non-finite loss.
TrainResult train(SequenceModel& model, const SupervisedDataset& train_set, const SupervisedDataset* test_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Mean squared error of a frozen model; batches may run concurrently and
/// are reduced in order.
double evaluate_mse(const SequenceModel& model, const SupervisedDataset& dataset, std::size_t batch_size = 256);

/// Predictions for every sample, in dataset order.
std::vector<double> predict_all(const SequenceModel& model, const SupervisedDataset& dataset,
                                std::size_t batch_size = 256);

}  // namespace lagscope::models
