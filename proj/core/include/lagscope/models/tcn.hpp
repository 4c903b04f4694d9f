#pragma once

#include <cstdint>
#include <vector>

#include "lagscope/autodiff/ops.hpp"
#include "lagscope/models/model.hpp"

namespace lagscope::models {

/// Stacked residual blocks of dilated causal convolutions. Block l uses
/// dilation 2^l: conv -> relu -> conv -> relu, then relu(out + residual),
/// where the residual is a 1x1 convolution when the channel count changes.
class TcnModel final : public SequenceModel {
 public:
  /// Throws if the receptive field is shorter than the window and the check
  /// is enabled; the message names the level count that would suffice.
  TcnModel(const ModelConfig& config, std::uint64_t seed);
  ad::Var forward(ad::Tape& tape, ad::Var windows) const override;

  std::size_t levels() const noexcept { return levels_; }
  std::size_t receptive_field() const noexcept;

 private:
  struct Block {
    std::size_t conv1_w, conv1_b, conv2_w, conv2_b;
    std::size_t down_w = 0, down_b = 0;
    bool has_downsample = false;
  };
  struct Trunk {
    std::vector<Block> blocks;
  };

  Trunk make_trunk(const std::string& prefix, std::mt19937_64& rng);
  /// x [B, N, L] -> per-level outputs [B, C, L].
  std::vector<ad::Var> run_trunk(ad::Tape& tape, const Trunk& trunk, ad::Var x) const;
  ad::Var attend(ad::Tape& tape, ad::Var sequence) const;  // [B, M, C] -> [B, C]

  std::size_t levels_ = 0;
  std::vector<Trunk> trunks_;
  std::size_t attention_ = 0;
  std::size_t head_w_ = 0, head_b_ = 0;
};

}  // namespace lagscope::models
