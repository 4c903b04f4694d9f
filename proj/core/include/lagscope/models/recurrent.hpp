#pragma once

#include <cstdint>
#include <vector>

#include "lagscope/autodiff/ops.hpp"
#include "lagscope/models/model.hpp"

namespace lagscope::models {

// Cell steps operate on batches: hidden states are [B, d] (or [B, N, d] for
// the variable-wise cell), inputs x_t are [B, N]. Weights act on row vectors.

struct LstmWeights {
  ad::Var w_x;  // [N, 4d], gate blocks i, f, g, o
  ad::Var w_h;  // [d, 4d]
  ad::Var b;    // [4d]
};

struct RecurrentState {
  ad::Var hidden;
  ad::Var cell;
};

RecurrentState lstm_step(const RecurrentState& prev, ad::Var x_t, const LstmWeights& w);

struct GruWeights {
  ad::Var w_x;   // [N, 3d], blocks r, z, n
  ad::Var u_rz;  // [d, 2d]
  ad::Var u_n;   // [d, d]
  ad::Var b;     // [3d]
};

/// Cho et al. update: h = z*h_prev + (1 - z)*tanh(x W_n + (r*h_prev) U_n + b_n).
ad::Var gru_step(ad::Var h_prev, ad::Var x_t, const GruWeights& w);

/// Variable-wise LSTM weights, gates ordered i, j, f, o.
struct ImvLstmWeights {
  ad::Var w[4];  // [N, d, d] hidden-to-hidden blocks
  ad::Var u[4];  // [N, d, 1] input-to-hidden blocks
  ad::Var b[4];  // [N, d]
};

enum ImvGate { kGateI = 0, kGateJ = 1, kGateF = 2, kGateO = 3 };

/// State matrices are [B, N, d]; block k of each gate only sees h^(k) and x^(k).
RecurrentState imv_lstm_step(const RecurrentState& prev, ad::Var x_t, const ImvLstmWeights& w);

struct ImvReadoutWeights {
  ad::Var attention;  // [d, 1] scoring vector
  ad::Var head_w;     // [d, 1]
  ad::Var head_b;     // [1]
};

struct ImvReadout {
  ad::Var prediction;  // [B]
  ad::Var attention;   // [B, N], rows sum to 1
};

/// Softmax attention over the N variable-wise hidden vectors, weighted sum,
/// then a linear head. Stands in for the full mixture attention.
ImvReadout imv_readout(ad::Var hidden, const ImvReadoutWeights& w);

struct AntisymmetricWeights {
  ad::Var w_h;  // [d, d]
  ad::Var v_h;  // [N, d]
  ad::Var v_z;  // [N, d]
  ad::Var b_h;  // [d]
  ad::Var b_z;  // [d]
  double gamma = 0.01;
  double step_size = 0.01;
};

/// W - W^T - gamma I.
ad::Var antisymmetric_matrix(ad::Var w_h, double gamma);

/// Gated forward-Euler step
///   z = sigmoid(A h + V_z x + b_z),  h' = h + step * z * tanh(A h + V_h x + b_h)
/// with A = antisymmetric_matrix(W_h, gamma), supplied precomputed.
ad::Var antisymmetric_step(ad::Var h_prev, ad::Var x_t, const AntisymmetricWeights& w, ad::Var a);
ad::Var antisymmetric_step(ad::Var h_prev, ad::Var x_t, const AntisymmetricWeights& w);

struct RhnLayerWeights {
  ad::Var r_h, r_t, r_c;  // [d, d]
  ad::Var b_h, b_t, b_c;  // [d]
};

struct RhnWeights {
  ad::Var w_h, w_t, w_c;  // [N, d], applied at the first micro-layer only
  std::vector<RhnLayerWeights> layers;
};

/// L highway micro-layers: s_0 = y_prev, s_l = h_l * t_l + s_{l-1} * c_l, y = s_L.
ad::Var rhn_step(ad::Var y_prev, ad::Var x_t, const RhnWeights& w);

class LstmModel final : public SequenceModel {
 public:
  LstmModel(const ModelConfig& config, std::uint64_t seed);
  ad::Var forward(ad::Tape& tape, ad::Var windows) const override;
  LstmWeights bind_cell(ad::Tape& tape) const;

 private:
  std::size_t w_x_, w_h_, b_, head_w_, head_b_;
};

class GruModel final : public SequenceModel {
 public:
  GruModel(const ModelConfig& config, std::uint64_t seed);
  ad::Var forward(ad::Tape& tape, ad::Var windows) const override;

 private:
  std::size_t w_x_, u_rz_, u_n_, b_, head_w_, head_b_;
};

class ImvLstmModel final : public SequenceModel {
 public:
  ImvLstmModel(const ModelConfig& config, std::uint64_t seed);
  ad::Var forward(ad::Tape& tape, ad::Var windows) const override;
  /// Variable attention weights [B, N] for a batch of windows.
  ad::Tensor attention(const ad::Tensor& windows) const;
  ImvLstmWeights bind_cell(ad::Tape& tape) const;

 private:
  ImvReadout run(ad::Tape& tape, ad::Var windows) const;
  std::size_t w_[4], u_[4], b_[4];
  std::size_t attention_, head_w_, head_b_;
};

class AntisymmetricRnnModel final : public SequenceModel {
 public:
  AntisymmetricRnnModel(const ModelConfig& config, std::uint64_t seed);
  ad::Var forward(ad::Tape& tape, ad::Var windows) const override;

 private:
  std::size_t w_h_, v_h_, v_z_, b_h_, b_z_, head_w_, head_b_;
};

class RhnModel final : public SequenceModel {
 public:
  RhnModel(const ModelConfig& config, std::uint64_t seed);
  ad::Var forward(ad::Tape& tape, ad::Var windows) const override;

 private:
  struct Layer {
    std::size_t r_h, r_t, r_c, b_h, b_t, b_c;
  };
  std::size_t w_h_, w_t_, w_c_, head_w_, head_b_;
  std::vector<Layer> layers_;
};

/// x_t [B, N] of a [B, window, N] batch.
ad::Var time_step(ad::Var windows, std::size_t t);

}  // namespace lagscope::models
