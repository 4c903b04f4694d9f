#include <Eigen/Core>
#include <algorithm>

#include "lagscope/autodiff/ops.hpp"
#include "lagscope/error.hpp"

namespace lagscope::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// Samples per im2col block; keeps the column buffer small while giving the
// GEMM enough columns to be efficient.
constexpr std::size_t kChunk = 16;

struct ConvGeometry {
  std::size_t batch, in_ch, out_ch, length, taps, dilation;
  std::size_t rows() const { return in_ch * taps; }
};

// cols[(c*taps + i), j*length + s] = x[b0 + j, c, s - dilation*i] (0 before the start).
void im2col(const ConvGeometry& g, const double* x, std::size_t b0, std::size_t nb, RowMat& cols) {
  const std::size_t width = nb * g.length;
  cols.setZero(static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(width));
  for (std::size_t j = 0; j < nb; ++j) {
    for (std::size_t c = 0; c < g.in_ch; ++c) {
      const double* src = x + ((b0 + j) * g.in_ch + c) * g.length;
      for (std::size_t i = 0; i < g.taps; ++i) {
        const std::size_t shift = g.dilation * i;
        if (shift >= g.length) continue;
        double* dst = cols.data() + (c * g.taps + i) * width + j * g.length;
        std::copy_n(src, g.length - shift, dst + shift);
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const RowMat& dcols, std::size_t b0, std::size_t nb, double* dx) {
  const std::size_t width = nb * g.length;
  for (std::size_t j = 0; j < nb; ++j) {
    for (std::size_t c = 0; c < g.in_ch; ++c) {
      double* dst = dx + ((b0 + j) * g.in_ch + c) * g.length;
      for (std::size_t i = 0; i < g.taps; ++i) {
        const std::size_t shift = g.dilation * i;
        if (shift >= g.length) continue;
        const double* src = dcols.data() + (c * g.taps + i) * width + j * g.length + shift;
        for (std::size_t s = 0; s + shift < g.length; ++s) dst[s] += src[s];
      }
    }
  }
}

}  // namespace

Var conv1d_dilated_causal(Var x, Var w, Var bias, std::size_t dilation) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.rank() != 3 || wv.rank() != 3 || xv.dim(1) != wv.dim(1)) {
    throw Error("conv1d_dilated_causal: incompatible shapes " + shape_string(xv.shape()) + " and " +
                shape_string(wv.shape()));
  }
  if (dilation == 0) throw Error("conv1d_dilated_causal: dilation must be >= 1");
  const ConvGeometry g{xv.dim(0), xv.dim(1), wv.dim(0), xv.dim(2), wv.dim(2), dilation};
  if (g.taps == 0) throw Error("conv1d_dilated_causal: kernel size must be >= 1");
  const bool has_bias = bias.valid();
  if (has_bias && bias.value().shape() != Shape{g.out_ch}) {
    throw Error("conv1d_dilated_causal: bias shape " + shape_string(bias.value().shape()) +
                " does not match " + std::to_string(g.out_ch) + " output channels");
  }

  Tensor out({g.batch, g.out_ch, g.length});
  ConstMapMat wmat(wv.data(), g.out_ch, g.rows());
  RowMat cols;
  RowMat prod;
  for (std::size_t b0 = 0; b0 < g.batch; b0 += kChunk) {
    const std::size_t nb = std::min(kChunk, g.batch - b0);
    im2col(g, xv.data(), b0, nb, cols);
    prod.noalias() = wmat * cols;
    for (std::size_t j = 0; j < nb; ++j) {
      for (std::size_t o = 0; o < g.out_ch; ++o) {
        const double* src = prod.data() + o * nb * g.length + j * g.length;
        double* dst = out.data() + ((b0 + j) * g.out_ch + o) * g.length;
        const double b = has_bias ? bias.value()[o] : 0.0;
        for (std::size_t s = 0; s < g.length; ++s) dst[s] = src[s] + b;
      }
    }
  }

  const std::size_t ix = x.id(), iw = w.id(), ib = has_bias ? bias.id() : 0;
  std::vector<Var> inputs{x, w};
  if (has_bias) inputs.push_back(bias);
  return x.tape().record(std::move(out), inputs, [g, ix, iw, ib, has_bias](Tape& t, std::size_t self) {
    const Tensor& grad = t.grad(self);
    Tensor* gx = t.grad_sink(ix);
    Tensor* gw = t.grad_sink(iw);
    Tensor* gb = has_bias ? t.grad_sink(ib) : nullptr;
    if (gb) {
      for (std::size_t b = 0; b < g.batch; ++b) {
        for (std::size_t o = 0; o < g.out_ch; ++o) {
          const double* src = grad.data() + (b * g.out_ch + o) * g.length;
          double s = 0.0;
          for (std::size_t k = 0; k < g.length; ++k) s += src[k];
          (*gb)[o] += s;
        }
      }
    }
    if (!gx && !gw) return;
    ConstMapMat wmat(t.value(iw).data(), g.out_ch, g.rows());
    RowMat cols, gout, dcols;
    for (std::size_t b0 = 0; b0 < g.batch; b0 += kChunk) {
      const std::size_t nb = std::min(kChunk, g.batch - b0);
      const std::size_t width = nb * g.length;
      gout.resize(static_cast<Eigen::Index>(g.out_ch), static_cast<Eigen::Index>(width));
      for (std::size_t j = 0; j < nb; ++j) {
        for (std::size_t o = 0; o < g.out_ch; ++o) {
          std::copy_n(grad.data() + ((b0 + j) * g.out_ch + o) * g.length, g.length,
                      gout.data() + o * width + j * g.length);
        }
      }
      if (gw) {
        im2col(g, t.value(ix).data(), b0, nb, cols);
        MapMat(gw->data(), g.out_ch, g.rows()).noalias() += gout * cols.transpose();
      }
      if (gx) {
        dcols.noalias() = wmat.transpose() * gout;
        col2im_add(g, dcols, b0, nb, gx->data());
      }
    }
  });
}

Var conv1d_dilated_causal(Var x, Var w, std::size_t dilation) {
  return conv1d_dilated_causal(x, w, Var(), dilation);
}

}  // namespace lagscope::ad
