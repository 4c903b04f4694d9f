#include "lagscope/lbm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "lagscope/autodiff/adam.hpp"
#include "lagscope/autodiff/ops.hpp"
#include "lagscope/error.hpp"
#include "lagscope/parallel.hpp"

namespace lagscope {

using namespace lagscope::ad;

namespace {

constexpr std::size_t kEvalBatch = 256;

void check_inputs(const models::SequenceModel& model, const SupervisedDataset& test, const char* what) {
  if (test.empty()) throw Error(std::string(what) + ": test set is empty");
  if (test.window() != model.config().window) {
    throw Error(std::string(what) + ": test window " + std::to_string(test.window()) + " does not match model window " +
                std::to_string(model.config().window));
  }
  if (test.n_vars() != model.config().n_vars) {
    throw Error(std::string(what) + ": test set has " + std::to_string(test.n_vars()) + " variables, model expects " +
                std::to_string(model.config().n_vars));
  }
}

std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Tensor learn_once(const models::SequenceModel& model, const SupervisedDataset& test, const LbmConfig& config,
                  std::uint64_t seed) {
  const std::size_t window = test.window(), n_vars = test.n_vars();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor logits({window, n_vars});
  for (double& v : logits.values()) v = normal(rng);

  const std::size_t batch = config.batch_size == 0 ? test.size() : std::min(config.batch_size, test.size());
  std::vector<std::size_t> order(test.size());
  std::iota(order.begin(), order.end(), 0);
  if (batch < test.size()) std::shuffle(order.begin(), order.end(), rng);

  AdamState adam;
  adam.learning_rate = config.learning_rate;
  Tensor* params[1] = {&logits};
  Tensor grads[1];
  std::size_t cursor = 0;
  for (std::size_t step = 0; step < config.steps; ++step) {
    if (cursor + batch > order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const std::span<const std::size_t> idx(order.data() + cursor, batch);
    cursor += batch;

    Tape tape(Tape::ParameterMode::frozen);
    Var z = tape.variable(logits);
    Var mask = sigmoid(z);
    Tensor hard(mask.shape());
    for (std::size_t i = 0; i < hard.size(); ++i) hard.values()[i] = mask.value().values()[i] > 0.5 ? 1.0 : 0.0;

    Var masked = mul(tape.constant(test.batch_inputs(idx)), mask);
    Var pred = model.forward(tape, masked);
    Var fit = mean(abs(sub(tape.constant(test.batch_targets(idx)), pred)));
    Var loss = add(add(fit, scale(sum(abs(mask)), config.lambda1)),
                   scale(binary_cross_entropy(tape.constant(std::move(hard)), mask), config.lambda2));
    if (!std::isfinite(loss.value().item())) {
      throw NumericalError("lbm: non-finite mask loss at step " + std::to_string(step + 1));
    }
    tape.backward(loss);
    grads[0] = tape.gradient(z);
    adam_step(params, grads, adam);
  }

  Tensor soft(logits.shape());
  for (std::size_t i = 0; i < soft.size(); ++i) soft.values()[i] = 1.0 / (1.0 + std::exp(-logits.values()[i]));
  return soft;
}

}  // namespace

std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 19; ++i) grid.push_back(i * 0.05);
  return grid;
}

void validate(const LbmConfig& config) {
  if (config.steps < 1) throw Error("lbm: steps must be >= 1");
  if (!(config.learning_rate >= 0.0) || !std::isfinite(config.learning_rate)) {
    throw Error("lbm: mask learning rate must be finite and >= 0");
  }
  for (double l : {config.lambda1, config.lambda2, config.lambda3}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw Error("lbm: lambda weights must be finite and >= 0");
  }
  if (config.threshold_grid.empty()) throw Error("lbm: threshold grid is empty");
  if (config.restarts < 1) throw Error("lbm: restarts must be >= 1");
  for (std::size_t i = 0; i < config.threshold_grid.size(); ++i) {
    const double t = config.threshold_grid[i];
    if (!(t > 0.0 && t < 1.0)) throw Error("lbm: thresholds must lie in (0, 1)");
    if (i > 0 && !(t > config.threshold_grid[i - 1])) throw Error("lbm: threshold grid must be strictly increasing");
  }
}

LbmConfig lbm_preset(std::string_view name) {
  LbmConfig c;
  if (name == "linear") {
    c.lambda1 = 0.005;
    c.lambda2 = 0.5;
    c.lambda3 = 0.0001;
  } else if (name == "nonlinear") {
    c.lambda1 = 0.0005;
    c.lambda2 = 0.5;
    c.lambda3 = 0.00001;
  } else {
    throw Error("unknown lambda preset '" + std::string(name) + "' (expected linear or nonlinear)");
  }
  return c;
}

nlohmann::json lbm_config_to_json(const LbmConfig& c) {
  return {{"steps", c.steps},     {"learning_rate", c.learning_rate}, {"lambda1", c.lambda1},
          {"lambda2", c.lambda2}, {"lambda3", c.lambda3},             {"threshold_grid", c.threshold_grid},
          {"batch_size", c.batch_size}, {"restarts", c.restarts}};
}

LbmConfig lbm_config_from_json(const nlohmann::json& doc) {
  LbmConfig c;
  try {
    c.steps = doc.value("steps", c.steps);
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    c.lambda1 = doc.value("lambda1", c.lambda1);
    c.lambda2 = doc.value("lambda2", c.lambda2);
    c.lambda3 = doc.value("lambda3", c.lambda3);
    c.threshold_grid = doc.value("threshold_grid", c.threshold_grid);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.restarts = doc.value("restarts", c.restarts);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("lbm config: ") + e.what());
  }
  validate(c);
  return c;
}

Tensor learn_soft_mask(const models::SequenceModel& model, const SupervisedDataset& test, const LbmConfig& config,
                       std::uint64_t seed) {
  validate(config);
  check_inputs(model, test, "learn_soft_mask");
  Tensor soft = learn_once(model, test, config, seed);
  for (std::size_t r = 1; r < config.restarts; ++r) {
    const Tensor next = learn_once(model, test, config, mix(seed + r));
    for (std::size_t i = 0; i < soft.size(); ++i) soft.values()[i] += next.values()[i];
  }
  if (config.restarts > 1) {
    for (double& v : soft.values()) v /= static_cast<double>(config.restarts);
  }
  return soft;
}

double masked_abs_error(const models::SequenceModel& model, const SupervisedDataset& test, const Tensor& mask) {
  check_inputs(model, test, "masked_abs_error");
  if (mask.shape() != Shape{test.window(), test.n_vars()}) {
    throw Error("masked_abs_error: mask shape " + shape_string(mask.shape()) + " does not match window");
  }
  const std::size_t n = test.size();
  const std::size_t batches = (n + kEvalBatch - 1) / kEvalBatch;
  std::vector<double> partial(batches, 0.0);
  const std::size_t cell_count = mask.size();
  parallel_for(batches, [&](std::size_t b) {
    const std::size_t begin = b * kEvalBatch, end = std::min(n, begin + kEvalBatch);
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    Tensor inputs = test.batch_inputs(idx);
    double* x = inputs.data();
    for (std::size_t i = 0; i < inputs.size(); ++i) x[i] *= mask.values()[i % cell_count];
    const Tensor pred = model.predict(inputs);
    double s = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) s += std::abs(test[idx[i]].target - pred.values()[i]);
    partial[b] = s;
  });
  return std::accumulate(partial.begin(), partial.end(), 0.0) / static_cast<double>(n);
}

ImportanceMask binarize_mask(const Tensor& soft, const models::SequenceModel& model, const SupervisedDataset& test,
                             double lambda3, std::span<const double> grid) {
  check_inputs(model, test, "binarize_mask");
  if (grid.empty()) throw Error("binarize_mask: threshold grid is empty");
  if (!(lambda3 >= 0.0)) throw Error("binarize_mask: lambda3 must be >= 0");
  const Shape expected{test.window(), test.n_vars()};
  if (soft.shape() != expected) {
    throw Error("binarize_mask: soft mask shape " + shape_string(soft.shape()) + " does not match window " +
                shape_string(expected));
  }

  // Neighbouring thresholds often give the same mask; score each distinct one once.
  std::map<std::vector<std::uint8_t>, double> scored;
  ImportanceMask best;
  double best_score = std::numeric_limits<double>::infinity();
  for (double t : grid) {
    LagMask binary(expected[0], expected[1]);
    Tensor hard(expected);
    for (std::size_t r = 0; r < expected[0]; ++r) {
      for (std::size_t c = 0; c < expected[1]; ++c) {
        const bool on = soft.at(r, c) > t;
        binary.set(r, c, on);
        hard.at(r, c) = on ? 1.0 : 0.0;
      }
    }
    auto it = scored.find(binary.cells());
    if (it == scored.end()) {
      const double score = masked_abs_error(model, test, hard) + lambda3 * static_cast<double>(binary.count());
      it = scored.emplace(binary.cells(), score).first;
    }
    if (it->second <= best_score) {
      best_score = it->second;
      best.binary = std::move(binary);
      best.threshold = t;
    }
  }
  if (!std::isfinite(best_score)) throw NumericalError("binarize_mask: non-finite threshold score");
  best.soft = soft;
  return best;
}

ImportanceMask explain(const models::SequenceModel& model, const SupervisedDataset& test, const LbmConfig& config,
                       std::uint64_t seed) {
  const Tensor soft = learn_soft_mask(model, test, config, seed);
  return binarize_mask(soft, model, test, config.lambda3, config.threshold_grid);
}

std::vector<Dependency> extract_dependencies(const LagMask& binary, std::size_t target) {
  std::vector<Dependency> deps;
  const std::size_t window = binary.rows();
  for (std::size_t j = 0; j < binary.cols(); ++j) {
    Dependency d;
    d.target = target;
    d.source = j;
    for (std::size_t p = window; p-- > 0;) {
      if (binary(p, j)) d.lags.push_back(row_to_lag(p, window));
    }
    d.present = !d.lags.empty();
    deps.push_back(std::move(d));
  }
  return deps;
}

void save_soft_mask_csv(const Tensor& soft, const std::filesystem::path& path) {
  if (soft.rank() != 2) throw Error("save_soft_mask_csv: expected a [window, N] mask");
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  char buf[32];
  for (std::size_t r = 0; r < soft.shape()[0]; ++r) {
    for (std::size_t c = 0; c < soft.shape()[1]; ++c) {
      std::snprintf(buf, sizeof buf, "%.6f", soft.at(r, c));
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

void save_binary_mask_csv(const LagMask& binary, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t r = 0; r < binary.rows(); ++r) {
    for (std::size_t c = 0; c < binary.cols(); ++c) out << (c ? "," : "") << (binary(r, c) ? '1' : '0');
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace lagscope
