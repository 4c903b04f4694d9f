#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <string_view>
#include <vector>

#include "lagscope/autodiff/tensor.hpp"
#include "lagscope/lag_mask.hpp"
#include "lagscope/models/model.hpp"
#include "lagscope/series.hpp"

namespace lagscope {

/// 0.05, 0.10, ..., 0.95
std::vector<double> default_threshold_grid();

struct LbmConfig {
  std::size_t steps = 20;
  double learning_rate = 0.1;
  double lambda1 = 0.005;  // sparsity, soft phase
  double lambda2 = 0.5;    // binarization pull, soft phase
  double lambda3 = 1e-4;   // mask size penalty, threshold search
  std::vector<double> threshold_grid = default_threshold_grid();
  /// Test windows per optimization step; 0 uses every window at each step.
  std::size_t batch_size = 0;
  /// Independent soft masks averaged together.
  std::size_t restarts = 1;
};

void validate(const LbmConfig& config);

/// Named lambda presets "linear" and "nonlinear".
LbmConfig lbm_preset(std::string_view name);

nlohmann::json lbm_config_to_json(const LbmConfig& config);
LbmConfig lbm_config_from_json(const nlohmann::json& doc);

struct ImportanceMask {
  ad::Tensor soft;  // [window, N], entries in (0, 1)
  LagMask binary;   // soft > threshold
  double threshold = 0.5;
};

/// One global soft mask sigmoid(logits) over the test windows, logits drawn
/// from N(0, 1), minimizing
///   mean|y - F(X * M)| + lambda1 sum|M| + lambda2 BCE(M > 0.5, M)
/// with Adam. The binarized target in the BCE term is a constant. The model
/// is bound on a frozen tape and never modified.
ad::Tensor learn_soft_mask(const models::SequenceModel& model, const SupervisedDataset& test,
                           const LbmConfig& config, std::uint64_t seed);

/// mean|y - F(X * mask)| over the dataset for a [window, N] mask.
double masked_abs_error(const models::SequenceModel& model, const SupervisedDataset& test, const ad::Tensor& mask);

/// Threshold grid search on mean|y - F(X * (soft > T))| + lambda3 * count.
/// Ties go to the larger threshold.
ImportanceMask binarize_mask(const ad::Tensor& soft, const models::SequenceModel& model,
                             const SupervisedDataset& test, double lambda3, std::span<const double> grid);

/// learn_soft_mask followed by binarize_mask.
ImportanceMask explain(const models::SequenceModel& model, const SupervisedDataset& test, const LbmConfig& config,
                       std::uint64_t seed);

struct Dependency {
  std::size_t target = 0;
  std::size_t source = 0;
  bool present = false;           // indicator: any cell of the column set
  std::vector<std::size_t> lags;  // ascending
};

/// One entry per column of the mask; lag of row p is window - p.
std::vector<Dependency> extract_dependencies(const LagMask& binary, std::size_t target);

/// window rows by N columns; soft values with 6 decimals, binary as 0/1.
void save_soft_mask_csv(const ad::Tensor& soft, const std::filesystem::path& path);
void save_binary_mask_csv(const LagMask& binary, const std::filesystem::path& path);

}  // namespace lagscope
