#include "lagscope/models/tcn.hpp"

#include <algorithm>

#include "lagscope/error.hpp"

namespace lagscope::models {

using namespace lagscope::ad;

namespace {

// Conv filters start small, as in the usual TCN setup, so inputs the target
// does not depend on carry little weight after a short training run.
constexpr double kFilterStd = 0.01;

Var last_step(Var x) {  // [B, C, L] -> [B, C]
  const Shape& s = x.shape();
  return reshape(slice(x, 2, s[2] - 1, 1), {s[0], s[1]});
}

std::size_t trunk_count(TcnVariant v) {
  switch (v) {
    case TcnVariant::stack: return 3;
    case TcnVariant::bidirectional: return 2;
    default: return 1;
  }
}

}  // namespace

TcnModel::TcnModel(const ModelConfig& config, std::uint64_t seed) : SequenceModel(config) {
  const TcnConfig& tc = config.tcn;
  if (tc.kernel_size < 1) throw Error("tcn: kernel size must be >= 1");
  if (tc.channels < 1) throw Error("tcn: channel count must be >= 1");
  levels_ = tc.levels == 0 ? std::max<std::size_t>(1, required_levels(tc.kernel_size, config.window)) : tc.levels;
  if (tc.check_receptive_field && receptive_field() < config.window) {
    throw Error("tcn: receptive field " + std::to_string(receptive_field()) + " of " +
                std::to_string(levels_) + " levels does not cover window " + std::to_string(config.window) +
                "; use at least " + std::to_string(required_levels(tc.kernel_size, config.window)) + " levels");
  }
  if (tc.variant == TcnVariant::stack && config.window < 4) {
    throw Error("tcn: stack variant needs a window of at least 4");
  }

  std::mt19937_64 rng(seed);
  const std::size_t trunks = trunk_count(tc.variant);
  for (std::size_t i = 0; i < trunks; ++i) trunks_.push_back(make_trunk("tcn.trunk" + std::to_string(i) + ".", rng));
  const std::size_t C = tc.channels;
  if (tc.variant == TcnVariant::output_attention || tc.variant == TcnVariant::layerwise_attention) {
    attention_ = add_parameter("tcn.attention", {C, 1}, C, rng);
  }
  head_w_ = add_parameter("head.w", {C * trunks, 1}, C * trunks, rng);
  head_b_ = add_parameter("head.b", {1}, C * trunks, rng);
}

std::size_t TcnModel::receptive_field() const noexcept {
  return models::receptive_field(config().tcn.kernel_size, levels_);
}

TcnModel::Trunk TcnModel::make_trunk(const std::string& prefix, std::mt19937_64& rng) {
  const std::size_t k = config().tcn.kernel_size, C = config().tcn.channels;
  Trunk trunk;
  std::size_t in = config().n_vars;
  for (std::size_t l = 0; l < levels_; ++l) {
    const std::string p = prefix + "block" + std::to_string(l) + ".";
    Block b;
    b.conv1_w = add_normal_parameter(p + "conv1.w", {C, in, k}, kFilterStd, rng);
    b.conv1_b = add_parameter(p + "conv1.b", {C}, in * k, rng);
    b.conv2_w = add_normal_parameter(p + "conv2.w", {C, C, k}, kFilterStd, rng);
    b.conv2_b = add_parameter(p + "conv2.b", {C}, C * k, rng);
    if (in != C) {
      b.has_downsample = true;
      b.down_w = add_normal_parameter(p + "down.w", {C, in, 1}, kFilterStd, rng);
      b.down_b = add_parameter(p + "down.b", {C}, in, rng);
    }
    trunk.blocks.push_back(b);
    in = C;
  }
  return trunk;
}

std::vector<Var> TcnModel::run_trunk(Tape& tape, const Trunk& trunk, Var x) const {
  std::vector<Var> outputs;
  std::size_t dilation = 1;
  for (const Block& b : trunk.blocks) {
    Var y = relu(conv1d_dilated_causal(x, bind(tape, b.conv1_w), bind(tape, b.conv1_b), dilation));
    y = relu(conv1d_dilated_causal(y, bind(tape, b.conv2_w), bind(tape, b.conv2_b), dilation));
    Var residual = b.has_downsample ? conv1d_dilated_causal(x, bind(tape, b.down_w), bind(tape, b.down_b), 1) : x;
    x = relu(add(y, residual));
    outputs.push_back(x);
    dilation *= 2;
  }
  return outputs;
}

Var TcnModel::attend(Tape& tape, Var sequence) const {
  const Shape& s = sequence.shape();
  const std::size_t B = s[0], M = s[1], C = s[2];
  Var scores = reshape(matmul(reshape(sequence, {B * M, C}), bind(tape, attention_)), {B, M});
  return batch_weighted_sum(softmax(scores), sequence);
}

Var TcnModel::forward(Tape& tape, Var windows) const {
  check_input(windows);
  const std::size_t B = windows.shape()[0], C = config().tcn.channels, L = config().window;
  Var x = transpose(windows);  // [B, N, L]
  Var features;
  switch (config().tcn.variant) {
    case TcnVariant::standard:
      features = last_step(run_trunk(tape, trunks_[0], x).back());
      break;
    case TcnVariant::output_attention:
      features = attend(tape, transpose(run_trunk(tape, trunks_[0], x).back()));
      break;
    case TcnVariant::layerwise_attention: {
      std::vector<Var> summaries;
      for (Var level : run_trunk(tape, trunks_[0], x)) summaries.push_back(reshape(last_step(level), {B, 1, C}));
      features = attend(tape, concat(summaries, 1));
      break;
    }
    case TcnVariant::stack: {
      std::vector<Var> parts;
      for (std::size_t i = 0; i < 3; ++i) {
        const std::size_t len = L >> i;
        parts.push_back(last_step(run_trunk(tape, trunks_[i], slice(x, 2, L - len, len)).back()));
      }
      features = concat(parts, 1);
      break;
    }
    case TcnVariant::bidirectional:
      features = concat({last_step(run_trunk(tape, trunks_[0], x).back()),
                         last_step(run_trunk(tape, trunks_[1], reverse(x, 2)).back())},
                        1);
      break;
  }
  return linear_head(tape, features, head_w_, head_b_);
}

}  // namespace lagscope::models
