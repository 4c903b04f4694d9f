#include "lagscope/models/model.hpp"

#include <cmath>
#include <fstream>

#include "lagscope/autodiff/checkpoint.hpp"
#include "lagscope/autodiff/ops.hpp"
#include "lagscope/error.hpp"
#include "lagscope/models/recurrent.hpp"
#include "lagscope/models/tcn.hpp"

namespace lagscope::models {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::lstm: return "lstm";
    case ModelKind::gru: return "gru";
    case ModelKind::imv_lstm: return "imv-lstm";
    case ModelKind::antisymmetric_rnn: return "antisymmetric-rnn";
    case ModelKind::rhn: return "rhn";
    case ModelKind::tcn: return "tcn";
  }
  return "?";
}

std::string to_string(TcnVariant variant) {
  switch (variant) {
    case TcnVariant::standard: return "default";
    case TcnVariant::output_attention: return "output-attention";
    case TcnVariant::layerwise_attention: return "layerwise-attention";
    case TcnVariant::stack: return "stack";
    case TcnVariant::bidirectional: return "bidirectional";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  for (ModelKind k : {ModelKind::lstm, ModelKind::gru, ModelKind::imv_lstm, ModelKind::antisymmetric_rnn,
                      ModelKind::rhn, ModelKind::tcn}) {
    if (to_string(k) == name) return k;
  }
  throw Error("unknown model kind '" + std::string(name) +
              "' (expected lstm, gru, imv-lstm, antisymmetric-rnn, rhn or tcn)");
}

TcnVariant parse_tcn_variant(std::string_view name) {
  for (TcnVariant v : {TcnVariant::standard, TcnVariant::output_attention, TcnVariant::layerwise_attention,
                       TcnVariant::stack, TcnVariant::bidirectional}) {
    if (to_string(v) == name) return v;
  }
  throw Error("unknown TCN variant '" + std::string(name) + "'");
}

std::size_t receptive_field(std::size_t kernel_size, std::size_t levels) {
  std::size_t field = 1;
  for (std::size_t l = 0; l < levels; ++l) field += 2 * (kernel_size - 1) * (std::size_t{1} << l);
  return field;
}

std::size_t required_levels(std::size_t kernel_size, std::size_t window) {
  if (kernel_size < 2) {
    if (window <= 1) return 1;
    throw Error("tcn: kernel size 1 cannot cover a window of " + std::to_string(window));
  }
  std::size_t levels = 1;
  while (receptive_field(kernel_size, levels) < window) ++levels;
  return levels;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {
      {"kind", to_string(c.kind)},
      {"n_vars", c.n_vars},
      {"window", c.window},
      {"hidden", c.hidden},
      {"tcn",
       {{"kernel_size", c.tcn.kernel_size},
        {"channels", c.tcn.channels},
        {"levels", c.tcn.levels},
        {"variant", to_string(c.tcn.variant)},
        {"check_receptive_field", c.tcn.check_receptive_field}}},
      {"gamma", c.gamma},
      {"step_size", c.step_size},
      {"rhn_depth", c.rhn_depth},
  };
}

ModelConfig config_from_json(const nlohmann::json& doc) {
  ModelConfig c;
  try {
    c.kind = parse_model_kind(doc.at("kind").get<std::string>());
    c.n_vars = doc.at("n_vars").get<std::size_t>();
    c.window = doc.at("window").get<std::size_t>();
    c.hidden = doc.value("hidden", c.hidden);
    if (doc.contains("tcn")) {
      const auto& t = doc["tcn"];
      c.tcn.kernel_size = t.value("kernel_size", c.tcn.kernel_size);
      c.tcn.channels = t.value("channels", c.tcn.channels);
      c.tcn.levels = t.value("levels", c.tcn.levels);
      c.tcn.variant = parse_tcn_variant(t.value("variant", std::string("default")));
      c.tcn.check_receptive_field = t.value("check_receptive_field", true);
    }
    c.gamma = doc.value("gamma", c.gamma);
    c.step_size = doc.value("step_size", c.step_size);
    c.rhn_depth = doc.value("rhn_depth", c.rhn_depth);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("model config: ") + e.what());
  }
  return c;
}

SequenceModel::SequenceModel(ModelConfig config) : config_(std::move(config)) {
  if (config_.window == 0) throw Error("model: window must be >= 1");
  if (config_.n_vars == 0) throw Error("model: n_vars must be >= 1");
  if (config_.hidden == 0) throw Error("model: hidden size must be >= 1");
}

std::size_t SequenceModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::size_t SequenceModel::add_parameter(std::string name, ad::Shape shape, std::size_t fan_in,
                                         std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  ad::Tensor value(std::move(shape));
  for (double& v : value.values()) v = dist(rng);
  params_.push_back({std::move(name), std::move(value)});
  return params_.size() - 1;
}

std::size_t SequenceModel::add_normal_parameter(std::string name, ad::Shape shape, double stddev,
                                                std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  ad::Tensor value(std::move(shape));
  for (double& v : value.values()) v = dist(rng);
  params_.push_back({std::move(name), std::move(value)});
  return params_.size() - 1;
}

ad::Var SequenceModel::linear_head(ad::Tape& tape, ad::Var features, std::size_t weight,
                                   std::size_t bias) const {
  ad::Var y = ad::add(ad::matmul(features, bind(tape, weight)), bind(tape, bias));
  return ad::reshape(y, {features.shape()[0]});
}

void SequenceModel::check_input(ad::Var windows) const {
  const ad::Shape& s = windows.shape();
  if (s.size() != 3 || s[0] == 0 || s[1] != config_.window || s[2] != config_.n_vars) {
    throw Error(to_string(config_.kind) + ": expected input [B>=1, " + std::to_string(config_.window) + ", " +
                std::to_string(config_.n_vars) + "], got " + ad::shape_string(s));
  }
}

ad::Tensor SequenceModel::predict(const ad::Tensor& windows) const {
  ad::Tape tape(ad::Tape::ParameterMode::frozen);
  return forward(tape, tape.constant(windows)).value();
}

std::unique_ptr<SequenceModel> make_model(const ModelConfig& config, std::uint64_t seed) {
  switch (config.kind) {
    case ModelKind::lstm: return std::make_unique<LstmModel>(config, seed);
    case ModelKind::gru: return std::make_unique<GruModel>(config, seed);
    case ModelKind::imv_lstm: return std::make_unique<ImvLstmModel>(config, seed);
    case ModelKind::antisymmetric_rnn: return std::make_unique<AntisymmetricRnnModel>(config, seed);
    case ModelKind::rhn: return std::make_unique<RhnModel>(config, seed);
    case ModelKind::tcn: return std::make_unique<TcnModel>(config, seed);
  }
  throw Error("make_model: unknown kind");
}

std::string checkpoint_json(const SequenceModel& model) {
  const auto& c = model.config();
  return "{\"kind\":" + nlohmann::json(to_string(c.kind)).dump() + ",\"config\":" + config_to_json(c).dump() +
         ",\"params\":" + ad::parameters_to_json(model.parameters()) + "}\n";
}

void save_checkpoint(const SequenceModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_checkpoint: cannot write " + path.string());
  out << checkpoint_json(model);
}

std::unique_ptr<SequenceModel> model_from_checkpoint(const nlohmann::json& doc) {
  const ModelConfig config = config_from_json(doc.at("config"));
  auto model = make_model(config, 0);
  ad::parameters_from_json(doc.at("params"), model->parameters());
  return model;
}

std::unique_ptr<SequenceModel> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_checkpoint: cannot open " + path.string());
  try {
    return model_from_checkpoint(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error("load_checkpoint: " + std::string(e.what()));
  }
}

}  // namespace lagscope::models
