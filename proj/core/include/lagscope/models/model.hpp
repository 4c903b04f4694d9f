#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "lagscope/autodiff/tape.hpp"

namespace lagscope::models {

enum class ModelKind { lstm, gru, imv_lstm, antisymmetric_rnn, rhn, tcn };

enum class TcnVariant { standard, output_attention, layerwise_attention, stack, bidirectional };

std::string to_string(ModelKind kind);
std::string to_string(TcnVariant variant);
ModelKind parse_model_kind(std::string_view name);
TcnVariant parse_tcn_variant(std::string_view name);

struct TcnConfig {
  std::size_t kernel_size = 7;
  std::size_t channels = 16;
  /// Residual blocks with dilations 1, 2, 4, ...; 0 picks the fewest levels
  /// whose receptive field covers the window.
  std::size_t levels = 0;
  TcnVariant variant = TcnVariant::standard;
  bool check_receptive_field = true;
};

/// 1 + sum_{l < levels} 2 (k - 1) 2^l: two causal convolutions per block.
std::size_t receptive_field(std::size_t kernel_size, std::size_t levels);
/// Smallest level count whose receptive field is at least `window`.
std::size_t required_levels(std::size_t kernel_size, std::size_t window);

struct ModelConfig {
  ModelKind kind = ModelKind::tcn;
  std::size_t n_vars = 1;
  std::size_t window = 1;
  std::size_t hidden = 32;
  TcnConfig tcn;
  double gamma = 0.01;      // AntisymmetricRNN diffusion
  double step_size = 0.01;  // AntisymmetricRNN Euler step
  std::size_t rhn_depth = 3;
};

nlohmann::json config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& doc);

/// Regressor mapping windows [B, window, N] to next-value predictions [B].
/// forward() never mutates the model, so a trained model can be evaluated
/// from several threads, each with its own tape.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;
  SequenceModel(const SequenceModel&) = delete;
  SequenceModel& operator=(const SequenceModel&) = delete;

  virtual ad::Var forward(ad::Tape& tape, ad::Var windows) const = 0;

  const ModelConfig& config() const noexcept { return config_; }
  std::vector<ad::Parameter>& parameters() noexcept { return params_; }
  const std::vector<ad::Parameter>& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const;

  /// Predictions for a [B, window, N] batch on a frozen tape.
  ad::Tensor predict(const ad::Tensor& windows) const;

 protected:
  explicit SequenceModel(ModelConfig config);

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
  std::size_t add_parameter(std::string name, ad::Shape shape, std::size_t fan_in, std::mt19937_64& rng);
  /// Entries drawn from N(0, stddev^2).
  std::size_t add_normal_parameter(std::string name, ad::Shape shape, double stddev, std::mt19937_64& rng);
  ad::Var bind(ad::Tape& tape, std::size_t index) const { return tape.parameter(params_[index]); }
  /// Linear head on features [B, F]: -> [B].
  ad::Var linear_head(ad::Tape& tape, ad::Var features, std::size_t weight, std::size_t bias) const;
  void check_input(ad::Var windows) const;

 private:
  ModelConfig config_;
  std::vector<ad::Parameter> params_;
};

std::unique_ptr<SequenceModel> make_model(const ModelConfig& config, std::uint64_t seed);

/// {"kind", "config", "params"} envelope around the parameter JSON.
std::string checkpoint_json(const SequenceModel& model);
void save_checkpoint(const SequenceModel& model, const std::filesystem::path& path);
std::unique_ptr<SequenceModel> load_checkpoint(const std::filesystem::path& path);
std::unique_ptr<SequenceModel> model_from_checkpoint(const nlohmann::json& doc);

}  // namespace lagscope::models
