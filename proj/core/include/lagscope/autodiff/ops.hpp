#pragma once

#include <cstddef>
#include <vector>

#include "lagscope/autodiff/tape.hpp"

/// Differentiable ops over Var. Binary elementwise ops accept either equal
/// shapes or a right operand whose shape is a suffix of the left operand's
/// shape (broadcast over the leading axes), e.g. [B,T,N] * [T,N].
namespace lagscope::ad {

Var matmul(Var a, Var b);  // [m,k] x [k,n]
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // Hadamard product
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var abs(Var a);

Var sum(Var a);   // -> [1]
Var mean(Var a);  // -> [1]

Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(Var a, std::size_t axis, std::size_t start, std::size_t length);
Var reshape(Var a, Shape shape);
/// Swaps the last two axes (rank >= 2).
Var transpose(Var a);
Var reverse(Var a, std::size_t axis);
/// Softmax over the last axis.
Var softmax(Var a);

/// Mean binary cross-entropy -(t log p + (1-t) log(1-p)); p is clamped to
/// [1e-12, 1 - 1e-12].
Var binary_cross_entropy(Var target, Var prediction);

/// Dilated causal 1-D convolution over x [B, C_in, L] with filters
/// w [C_out, C_in, k] and optional bias [C_out]:
///   out[b,o,s] = bias[o] + sum_c sum_i w[o,c,i] * x[b,c,s - d*i]
/// Indices before the start of the sequence read as zero, so the output has
/// length L and position s never sees x at positions > s.
Var conv1d_dilated_causal(Var x, Var w, Var bias, std::size_t dilation);
Var conv1d_dilated_causal(Var x, Var w, std::size_t dilation);

/// Per-block matrix-vector product: W [N, o, i], h [B, N, i] -> [B, N, o]
/// with out[b,n] = W[n] * h[b,n].
Var blockwise_matvec(Var w, Var h);

/// out[b,:] = sum_m a[b,m] * h[b,m,:] for a [B, M], h [B, M, D].
Var batch_weighted_sum(Var a, Var h);

}  // namespace lagscope::ad
