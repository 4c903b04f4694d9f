#include "lagscope/autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "lagscope/error.hpp"

namespace lagscope::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw Error(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
              shape_string(b));
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Right operand period for broadcasting; throws when shapes are incompatible.
std::size_t broadcast_period(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return a.size();
  if (!is_suffix(b.shape(), a.shape())) shape_error(op, a.shape(), b.shape());
  return b.size();
}

// Splits a shape around an axis into (outer, length, inner).
struct AxisSplit {
  std::size_t outer = 1, length = 1, inner = 1;
};

AxisSplit split_at(const char* op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw Error(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.length = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Unary elementwise op with derivative expressed through input x and output y.
template <class Fwd, class Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, deriv](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_sink(ia);
    if (!ga) return;
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
    shape_error("matmul", av.shape(), bv.shape());
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  MapMat(out.data(), m, n).noalias() = ConstMapMat(av.data(), m, k) * ConstMapMat(bv.data(), k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    ConstMapMat g(t.grad(self).data(), m, n);
    if (Tensor* ga = t.grad_sink(ia)) {
      MapMat(ga->data(), m, k).noalias() += g * ConstMapMat(t.value(ib).data(), k, n).transpose();
    }
    if (Tensor* gb = t.grad_sink(ib)) {
      MapMat(gb->data(), k, n).noalias() += ConstMapMat(t.value(ia).data(), m, k).transpose() * g;
    }
  });
}

namespace {

template <class Fwd>
Var binary_broadcast(const char* op, Var a, Var b, Fwd fwd, double sign_b, bool product) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t period = broadcast_period(op, av, bv);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i % period]);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b},
                         [ia, ib, period, sign_b, product](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad(self);
                           const Tensor& av = t.value(ia);
                           const Tensor& bv = t.value(ib);
                           if (Tensor* ga = t.grad_sink(ia)) {
                             if (product) {
                               for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i % period];
                             } else {
                               for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
                             }
                           }
                           if (Tensor* gb = t.grad_sink(ib)) {
                             if (product) {
                               for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % period] += g[i] * av[i];
                             } else {
                               for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % period] += sign_b * g[i];
                             }
                           }
                         });
}

}  // namespace

Var add(Var a, Var b) {
  return binary_broadcast("add", a, b, [](double x, double y) { return x + y; }, 1.0, false);
}

Var sub(Var a, Var b) {
  return binary_broadcast("subtract", a, b, [](double x, double y) { return x - y; }, -1.0, false);
}

Var mul(Var a, Var b) {
  return binary_broadcast("hadamard", a, b, [](double x, double y) { return x * y; }, 1.0, true);
}

Var scale(Var a, double factor) {
  return unary(a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var sigmoid(Var a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  a.tape().note_branches(a.value());
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var abs(Var a) {
  a.tape().note_branches(a.value());
  return unary(a, [](double x) { return std::fabs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.values()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(s), {a}, [ia](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_sink(ia);
    if (!ga) return;
    const double g = t.grad(self)[0];
    for (double& v : ga->values()) v += g;
  });
}

Var mean(Var a) {
  const Tensor& x = a.value();
  if (x.empty()) throw Error("mean: empty tensor");
  double s = 0.0;
  for (double v : x.values()) s += v;
  const double n = static_cast<double>(x.size());
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(s / n), {a}, [ia, n](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_sink(ia);
    if (!ga) return;
    const double g = t.grad(self)[0] / n;
    for (double& v : ga->values()) v += g;
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw Error("concat: no inputs");
  const Shape& first = parts.front().shape();
  const AxisSplit base = split_at("concat", first, axis);
  std::vector<std::size_t> lengths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) shape_error("concat", first, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) shape_error("concat", first, s);
    }
    lengths.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& v = parts[p].value();
    const std::size_t chunk = lengths[p] * base.inner;
    for (std::size_t o = 0; o < base.outer; ++o) {
      std::copy_n(v.data() + o * chunk, chunk, out.data() + (o * total + offset) * base.inner);
    }
    offset += lengths[p];
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return parts.front().tape().record(
      std::move(out), parts, [ids, lengths, total, base](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        std::size_t offset = 0;
        for (std::size_t p = 0; p < ids.size(); ++p) {
          const std::size_t chunk = lengths[p] * base.inner;
          if (Tensor* gp = t.grad_sink(ids[p])) {
            for (std::size_t o = 0; o < base.outer; ++o) {
              const double* src = g.data() + (o * total + offset) * base.inner;
              double* dst = gp->data() + o * chunk;
              for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
            }
          }
          offset += lengths[p];
        }
      });
}

Var slice(Var a, std::size_t axis, std::size_t start, std::size_t length) {
  const Tensor& x = a.value();
  const AxisSplit s = split_at("slice", x.shape(), axis);
  if (length == 0 || start + length > s.length) {
    throw Error("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                ") out of bounds for axis " + std::to_string(axis) + " of shape " +
                shape_string(x.shape()));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  Tensor out(out_shape);
  const std::size_t chunk = length * s.inner;
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(x.data() + (o * s.length + start) * s.inner, chunk, out.data() + o * chunk);
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, s, start, chunk](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_sink(ia);
    if (!ga) return;
    const Tensor& g = t.grad(self);
    for (std::size_t o = 0; o < s.outer; ++o) {
      double* dst = ga->data() + (o * s.length + start) * s.inner;
      const double* src = g.data() + o * chunk;
      for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_sink(ia);
    if (!ga) return;
    const Tensor& g = t.grad(self);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
  });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  if (x.rank() < 2) throw Error("transpose: rank < 2 for shape " + shape_string(x.shape()));
  const std::size_t r = x.rank();
  const std::size_t m = x.shape()[r - 2], n = x.shape()[r - 1];
  const std::size_t batch = x.size() / (m * n);
  Shape out_shape = x.shape();
  std::swap(out_shape[r - 2], out_shape[r - 1]);
  Tensor out(out_shape);
  for (std::size_t b = 0; b < batch; ++b) {
    MapMat(out.data() + b * m * n, n, m) = ConstMapMat(x.data() + b * m * n, m, n).transpose();
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, batch, m, n](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_sink(ia);
    if (!ga) return;
    const Tensor& g = t.grad(self);
    for (std::size_t b = 0; b < batch; ++b) {
      MapMat(ga->data() + b * m * n, m, n) += ConstMapMat(g.data() + b * m * n, n, m).transpose();
    }
  });
}

Var reverse(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  const AxisSplit s = split_at("reverse", x.shape(), axis);
  Tensor out(x.shape());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t l = 0; l < s.length; ++l) {
      std::copy_n(x.data() + (o * s.length + l) * s.inner, s.inner,
                  out.data() + (o * s.length + (s.length - 1 - l)) * s.inner);
    }
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, s](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_sink(ia);
    if (!ga) return;
    const Tensor& g = t.grad(self);
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t l = 0; l < s.length; ++l) {
        const double* src = g.data() + (o * s.length + (s.length - 1 - l)) * s.inner;
        double* dst = ga->data() + (o * s.length + l) * s.inner;
        for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Var softmax(Var a) {
  const Tensor& x = a.value();
  if (x.rank() == 0 || x.empty()) throw Error("softmax: empty input");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * n;
    double* y = out.data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += (y[i] = std::exp(in[i] - mx));
    for (std::size_t i = 0; i < n; ++i) y[i] /= z;
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, rows, n](Tape& t, std::size_t self) {
    Tensor* ga = t.grad_sink(ia);
    if (!ga) return;
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += g[r * n + i] * y[r * n + i];
      for (std::size_t i = 0; i < n; ++i) {
        (*ga)[r * n + i] += y[r * n + i] * (g[r * n + i] - dot);
      }
    }
  });
}

Var binary_cross_entropy(Var target, Var prediction) {
  static constexpr double kClamp = 1e-12;
  const Tensor& tv = target.value();
  const Tensor& pv = prediction.value();
  if (tv.shape() != pv.shape()) shape_error("binary_cross_entropy", tv.shape(), pv.shape());
  if (pv.empty()) throw Error("binary_cross_entropy: empty input");
  const double n = static_cast<double>(pv.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double p = std::clamp(pv[i], kClamp, 1.0 - kClamp);
    total -= tv[i] * std::log(p) + (1.0 - tv[i]) * std::log(1.0 - p);
  }
  const std::size_t it = target.id(), ip = prediction.id();
  return target.tape().record(
      Tensor::scalar(total / n), {target, prediction}, [it, ip, n](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0] / n;
        const Tensor& tv = t.value(it);
        const Tensor& pv = t.value(ip);
        Tensor* gt = t.grad_sink(it);
        Tensor* gp = t.grad_sink(ip);
        for (std::size_t i = 0; i < pv.size(); ++i) {
          const double p = std::clamp(pv[i], kClamp, 1.0 - kClamp);
          if (gp) (*gp)[i] += g * (p - tv[i]) / (p * (1.0 - p));
          if (gt) (*gt)[i] += g * (std::log(1.0 - p) - std::log(p));
        }
      });
}

Var blockwise_matvec(Var w, Var h) {
  const Tensor& wv = w.value();
  const Tensor& hv = h.value();
  if (wv.rank() != 3 || hv.rank() != 3 || wv.dim(0) != hv.dim(1) || wv.dim(2) != hv.dim(2)) {
    shape_error("blockwise_matvec", wv.shape(), hv.shape());
  }
  const std::size_t nb = wv.dim(0), out_dim = wv.dim(1), in_dim = wv.dim(2), batch = hv.dim(0);
  using Strided = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
  using ConstStrided = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
  Tensor out({batch, nb, out_dim});
  for (std::size_t n = 0; n < nb; ++n) {
    ConstStrided hn(hv.data() + n * in_dim, batch, in_dim, Eigen::OuterStride<>(nb * in_dim));
    Strided on(out.data() + n * out_dim, batch, out_dim, Eigen::OuterStride<>(nb * out_dim));
    on.noalias() = hn * ConstMapMat(wv.data() + n * out_dim * in_dim, out_dim, in_dim).transpose();
  }
  const std::size_t iw = w.id(), ih = h.id();
  return w.tape().record(
      std::move(out), {w, h}, [iw, ih, nb, out_dim, in_dim, batch](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        Tensor* gw = t.grad_sink(iw);
        Tensor* gh = t.grad_sink(ih);
        for (std::size_t n = 0; n < nb; ++n) {
          ConstStrided gn(g.data() + n * out_dim, batch, out_dim, Eigen::OuterStride<>(nb * out_dim));
          if (gw) {
            ConstStrided hn(t.value(ih).data() + n * in_dim, batch, in_dim,
                            Eigen::OuterStride<>(nb * in_dim));
            MapMat(gw->data() + n * out_dim * in_dim, out_dim, in_dim).noalias() += gn.transpose() * hn;
          }
          if (gh) {
            Strided hn(gh->data() + n * in_dim, batch, in_dim, Eigen::OuterStride<>(nb * in_dim));
            hn.noalias() += gn * ConstMapMat(t.value(iw).data() + n * out_dim * in_dim, out_dim, in_dim);
          }
        }
      });
}

Var batch_weighted_sum(Var a, Var h) {
  const Tensor& av = a.value();
  const Tensor& hv = h.value();
  if (av.rank() != 2 || hv.rank() != 3 || av.dim(0) != hv.dim(0) || av.dim(1) != hv.dim(1)) {
    shape_error("batch_weighted_sum", av.shape(), hv.shape());
  }
  const std::size_t batch = hv.dim(0), m = hv.dim(1), d = hv.dim(2);
  Tensor out({batch, d});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < m; ++j) {
      const double w = av[b * m + j];
      const double* row = hv.data() + (b * m + j) * d;
      double* dst = out.data() + b * d;
      for (std::size_t k = 0; k < d; ++k) dst[k] += w * row[k];
    }
  }
  const std::size_t ia = a.id(), ih = h.id();
  return a.tape().record(std::move(out), {a, h}, [ia, ih, batch, m, d](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ia);
    const Tensor& hv = t.value(ih);
    Tensor* ga = t.grad_sink(ia);
    Tensor* gh = t.grad_sink(ih);
    for (std::size_t b = 0; b < batch; ++b) {
      const double* gb = g.data() + b * d;
      for (std::size_t j = 0; j < m; ++j) {
        const double* row = hv.data() + (b * m + j) * d;
        if (ga) {
          double dot = 0.0;
          for (std::size_t k = 0; k < d; ++k) dot += gb[k] * row[k];
          (*ga)[b * m + j] += dot;
        }
        if (gh) {
          const double w = av[b * m + j];
          double* dst = gh->data() + (b * m + j) * d;
          for (std::size_t k = 0; k < d; ++k) dst[k] += w * gb[k];
        }
      }
    }
  });
}

}  // namespace lagscope::ad
