#include "lagscope/models/recurrent.hpp"

#include "lagscope/error.hpp"

namespace lagscope::models {

using namespace lagscope::ad;

Var time_step(Var windows, std::size_t t) {
  const Shape& s = windows.shape();
  return reshape(slice(windows, 1, t, 1), {s[0], s[2]});
}

RecurrentState lstm_step(const RecurrentState& prev, Var x_t, const LstmWeights& w) {
  const std::size_t d = prev.hidden.shape()[1];
  Var gates = add(add(matmul(x_t, w.w_x), matmul(prev.hidden, w.w_h)), w.b);
  Var i = sigmoid(slice(gates, 1, 0, d));
  Var f = sigmoid(slice(gates, 1, d, d));
  Var g = tanh(slice(gates, 1, 2 * d, d));
  Var o = sigmoid(slice(gates, 1, 3 * d, d));
  Var c = add(mul(f, prev.cell), mul(i, g));
  return {mul(o, tanh(c)), c};
}

Var gru_step(Var h_prev, Var x_t, const GruWeights& w) {
  const std::size_t d = h_prev.shape()[1];
  Var xw = add(matmul(x_t, w.w_x), w.b);
  Var hu = matmul(h_prev, w.u_rz);
  Var r = sigmoid(add(slice(xw, 1, 0, d), slice(hu, 1, 0, d)));
  Var z = sigmoid(add(slice(xw, 1, d, d), slice(hu, 1, d, d)));
  Var n = tanh(add(slice(xw, 1, 2 * d, d), matmul(mul(r, h_prev), w.u_n)));
  return add(n, mul(z, sub(h_prev, n)));
}

RecurrentState imv_lstm_step(const RecurrentState& prev, Var x_t, const ImvLstmWeights& w) {
  const Shape& hs = prev.hidden.shape();
  if (hs.size() != 3 || x_t.shape().size() != 2 || x_t.shape()[0] != hs[0] || x_t.shape()[1] != hs[1]) {
    throw Error("imv_lstm_step: hidden " + shape_string(hs) + " incompatible with input " +
                shape_string(x_t.shape()));
  }
  Var x3 = reshape(x_t, {hs[0], hs[1], 1});
  Var pre[4];
  for (int g = 0; g < 4; ++g) {
    pre[g] = add(add(blockwise_matvec(w.w[g], prev.hidden), blockwise_matvec(w.u[g], x3)), w.b[g]);
  }
  Var i = sigmoid(pre[kGateI]);
  Var j = tanh(pre[kGateJ]);
  Var f = sigmoid(pre[kGateF]);
  Var o = sigmoid(pre[kGateO]);
  Var c = add(mul(prev.cell, f), mul(i, j));
  return {mul(o, tanh(c)), c};
}

ImvReadout imv_readout(Var hidden, const ImvReadoutWeights& w) {
  const Shape& s = hidden.shape();
  if (s.size() != 3) throw Error("imv_readout: expected [B, N, d], got " + shape_string(s));
  const std::size_t B = s[0], N = s[1], d = s[2];
  Var scores = reshape(matmul(reshape(hidden, {B * N, d}), w.attention), {B, N});
  Var attention = softmax(scores);
  Var context = batch_weighted_sum(attention, hidden);
  Var prediction = reshape(add(matmul(context, w.head_w), w.head_b), {B});
  return {prediction, attention};
}

Var antisymmetric_matrix(Var w_h, double gamma) {
  const Shape& s = w_h.shape();
  if (s.size() != 2 || s[0] != s[1]) throw Error("antisymmetric_matrix: W_h must be square, got " + shape_string(s));
  Tensor diffusion({s[0], s[0]}, 0.0);
  for (std::size_t i = 0; i < s[0]; ++i) diffusion.at(i, i) = gamma;
  return sub(sub(w_h, transpose(w_h)), w_h.tape().constant(std::move(diffusion)));
}

Var antisymmetric_step(Var h_prev, Var x_t, const AntisymmetricWeights& w, Var a) {
  Var ah = matmul(h_prev, transpose(a));
  Var z = sigmoid(add(add(ah, matmul(x_t, w.v_z)), w.b_z));
  Var update = mul(z, tanh(add(add(ah, matmul(x_t, w.v_h)), w.b_h)));
  return add(h_prev, scale(update, w.step_size));
}

Var antisymmetric_step(Var h_prev, Var x_t, const AntisymmetricWeights& w) {
  return antisymmetric_step(h_prev, x_t, w, antisymmetric_matrix(w.w_h, w.gamma));
}

Var rhn_step(Var y_prev, Var x_t, const RhnWeights& w) {
  if (w.layers.empty()) throw Error("rhn_step: recurrence depth must be >= 1");
  Var s = y_prev;
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const RhnLayerWeights& L = w.layers[l];
    Var ph = add(matmul(s, L.r_h), L.b_h);
    Var pt = add(matmul(s, L.r_t), L.b_t);
    Var pc = add(matmul(s, L.r_c), L.b_c);
    if (l == 0) {
      ph = add(ph, matmul(x_t, w.w_h));
      pt = add(pt, matmul(x_t, w.w_t));
      pc = add(pc, matmul(x_t, w.w_c));
    }
    s = add(mul(tanh(ph), sigmoid(pt)), mul(s, sigmoid(pc)));
  }
  return s;
}

namespace {

Var zeros(Tape& tape, Shape shape) { return tape.constant(Tensor(std::move(shape), 0.0)); }

}  // namespace

// ---- LSTM -----------------------------------------------------------------

LstmModel::LstmModel(const ModelConfig& config, std::uint64_t seed) : SequenceModel(config) {
  std::mt19937_64 rng(seed);
  const std::size_t N = config.n_vars, d = config.hidden;
  w_x_ = add_parameter("lstm.w_x", {N, 4 * d}, N, rng);
  w_h_ = add_parameter("lstm.w_h", {d, 4 * d}, d, rng);
  b_ = add_parameter("lstm.b", {4 * d}, d, rng);
  head_w_ = add_parameter("head.w", {d, 1}, d, rng);
  head_b_ = add_parameter("head.b", {1}, d, rng);
}

LstmWeights LstmModel::bind_cell(Tape& tape) const {
  return {bind(tape, w_x_), bind(tape, w_h_), bind(tape, b_)};
}

Var LstmModel::forward(Tape& tape, Var windows) const {
  check_input(windows);
  const std::size_t B = windows.shape()[0], d = config().hidden;
  const LstmWeights w = bind_cell(tape);
  RecurrentState state{zeros(tape, {B, d}), zeros(tape, {B, d})};
  for (std::size_t t = 0; t < config().window; ++t) state = lstm_step(state, time_step(windows, t), w);
  return linear_head(tape, state.hidden, head_w_, head_b_);
}

// ---- GRU ------------------------------------------------------------------

GruModel::GruModel(const ModelConfig& config, std::uint64_t seed) : SequenceModel(config) {
  std::mt19937_64 rng(seed);
  const std::size_t N = config.n_vars, d = config.hidden;
  w_x_ = add_parameter("gru.w_x", {N, 3 * d}, N, rng);
  u_rz_ = add_parameter("gru.u_rz", {d, 2 * d}, d, rng);
  u_n_ = add_parameter("gru.u_n", {d, d}, d, rng);
  b_ = add_parameter("gru.b", {3 * d}, d, rng);
  head_w_ = add_parameter("head.w", {d, 1}, d, rng);
  head_b_ = add_parameter("head.b", {1}, d, rng);
}

Var GruModel::forward(Tape& tape, Var windows) const {
  check_input(windows);
  const std::size_t B = windows.shape()[0], d = config().hidden;
  const GruWeights w{bind(tape, w_x_), bind(tape, u_rz_), bind(tape, u_n_), bind(tape, b_)};
  Var h = zeros(tape, {B, d});
  for (std::size_t t = 0; t < config().window; ++t) h = gru_step(h, time_step(windows, t), w);
  return linear_head(tape, h, head_w_, head_b_);
}

// ---- IMV-LSTM -------------------------------------------------------------

ImvLstmModel::ImvLstmModel(const ModelConfig& config, std::uint64_t seed) : SequenceModel(config) {
  std::mt19937_64 rng(seed);
  const std::size_t N = config.n_vars, d = config.hidden;
  const char* gate_names[4] = {"i", "j", "f", "o"};
  for (int g = 0; g < 4; ++g) {
    const std::string gn = gate_names[g];
    w_[g] = add_parameter("imv.w_" + gn, {N, d, d}, d, rng);
    u_[g] = add_parameter("imv.u_" + gn, {N, d, 1}, 1, rng);
    b_[g] = add_parameter("imv.b_" + gn, {N, d}, d, rng);
  }
  attention_ = add_parameter("imv.attention", {d, 1}, d, rng);
  head_w_ = add_parameter("head.w", {d, 1}, d, rng);
  head_b_ = add_parameter("head.b", {1}, d, rng);
}

ImvLstmWeights ImvLstmModel::bind_cell(Tape& tape) const {
  ImvLstmWeights w;
  for (int g = 0; g < 4; ++g) {
    w.w[g] = bind(tape, w_[g]);
    w.u[g] = bind(tape, u_[g]);
    w.b[g] = bind(tape, b_[g]);
  }
  return w;
}

ImvReadout ImvLstmModel::run(Tape& tape, Var windows) const {
  check_input(windows);
  const std::size_t B = windows.shape()[0], N = config().n_vars, d = config().hidden;
  const ImvLstmWeights w = bind_cell(tape);
  RecurrentState state{zeros(tape, {B, N, d}), zeros(tape, {B, N, d})};
  for (std::size_t t = 0; t < config().window; ++t) state = imv_lstm_step(state, time_step(windows, t), w);
  return imv_readout(state.hidden, {bind(tape, attention_), bind(tape, head_w_), bind(tape, head_b_)});
}

Var ImvLstmModel::forward(Tape& tape, Var windows) const { return run(tape, windows).prediction; }

Tensor ImvLstmModel::attention(const Tensor& windows) const {
  Tape tape(Tape::ParameterMode::frozen);
  return run(tape, tape.constant(windows)).attention.value();
}

// ---- AntisymmetricRNN -----------------------------------------------------

AntisymmetricRnnModel::AntisymmetricRnnModel(const ModelConfig& config, std::uint64_t seed)
    : SequenceModel(config) {
  if (config.gamma < 0.0) throw Error("antisymmetric-rnn: gamma must be >= 0");
  if (!(config.step_size > 0.0)) throw Error("antisymmetric-rnn: step size must be > 0");
  std::mt19937_64 rng(seed);
  const std::size_t N = config.n_vars, d = config.hidden;
  w_h_ = add_parameter("asym.w_h", {d, d}, d, rng);
  v_h_ = add_parameter("asym.v_h", {N, d}, N, rng);
  v_z_ = add_parameter("asym.v_z", {N, d}, N, rng);
  b_h_ = add_parameter("asym.b_h", {d}, d, rng);
  b_z_ = add_parameter("asym.b_z", {d}, d, rng);
  head_w_ = add_parameter("head.w", {d, 1}, d, rng);
  head_b_ = add_parameter("head.b", {1}, d, rng);
}

Var AntisymmetricRnnModel::forward(Tape& tape, Var windows) const {
  check_input(windows);
  const std::size_t B = windows.shape()[0], d = config().hidden;
  const AntisymmetricWeights w{bind(tape, w_h_), bind(tape, v_h_), bind(tape, v_z_), bind(tape, b_h_),
                               bind(tape, b_z_), config().gamma, config().step_size};
  Var a = antisymmetric_matrix(w.w_h, w.gamma);
  Var h = zeros(tape, {B, d});
  for (std::size_t t = 0; t < config().window; ++t) h = antisymmetric_step(h, time_step(windows, t), w, a);
  return linear_head(tape, h, head_w_, head_b_);
}

// ---- RHN ------------------------------------------------------------------

RhnModel::RhnModel(const ModelConfig& config, std::uint64_t seed) : SequenceModel(config) {
  if (config.rhn_depth < 1) throw Error("rhn: recurrence depth must be >= 1");
  std::mt19937_64 rng(seed);
  const std::size_t N = config.n_vars, d = config.hidden;
  w_h_ = add_parameter("rhn.w_h", {N, d}, N, rng);
  w_t_ = add_parameter("rhn.w_t", {N, d}, N, rng);
  w_c_ = add_parameter("rhn.w_c", {N, d}, N, rng);
  for (std::size_t l = 0; l < config.rhn_depth; ++l) {
    const std::string p = "rhn.layer" + std::to_string(l) + ".";
    Layer layer;
    layer.r_h = add_parameter(p + "r_h", {d, d}, d, rng);
    layer.r_t = add_parameter(p + "r_t", {d, d}, d, rng);
    layer.r_c = add_parameter(p + "r_c", {d, d}, d, rng);
    layer.b_h = add_parameter(p + "b_h", {d}, d, rng);
    layer.b_t = add_parameter(p + "b_t", {d}, d, rng);
    layer.b_c = add_parameter(p + "b_c", {d}, d, rng);
    layers_.push_back(layer);
  }
  head_w_ = add_parameter("head.w", {d, 1}, d, rng);
  head_b_ = add_parameter("head.b", {1}, d, rng);
}

Var RhnModel::forward(Tape& tape, Var windows) const {
  check_input(windows);
  const std::size_t B = windows.shape()[0], d = config().hidden;
  RhnWeights w{bind(tape, w_h_), bind(tape, w_t_), bind(tape, w_c_), {}};
  for (const Layer& l : layers_) {
    w.layers.push_back({bind(tape, l.r_h), bind(tape, l.r_t), bind(tape, l.r_c), bind(tape, l.b_h),
                        bind(tape, l.b_t), bind(tape, l.b_c)});
  }
  Var y = zeros(tape, {B, d});
  for (std::size_t t = 0; t < config().window; ++t) y = rhn_step(y, time_step(windows, t), w);
  return linear_head(tape, y, head_w_, head_b_);
}

}  // namespace lagscope::models
