#include "bam/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

namespace bam {

namespace {

// Four independent partial sums; fixed order, so results are reproducible.
double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    y[i] += alpha * x[i];
    y[i + 1] += alpha * x[i + 1];
    y[i + 2] += alpha * x[i + 2];
    y[i + 3] += alpha * x[i + 3];
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

constexpr std::array<std::string_view, 25> kDifferentiableOps = {
    "add",       "sub",       "mul",        "div",           "scale",         "matmul",
    "linear",    "tanh",      "sigmoid",    "selu",          "softmax",
    "masked_softmax",         "batch_norm", "conv1d",        "reshape",
    "permute",   "concat",    "slice",      "sum",           "mean",
    "sum_axis",  "mean_axis", "max_axis",   "cross_entropy", "bce_with_logits"};

std::size_t normalize_axis(int axis, std::size_t ndim, const char* what) {
  const long a = axis < 0 ? static_cast<long>(ndim) + axis : axis;
  if (a < 0 || a >= static_cast<long>(ndim)) {
    throw ShapeError(std::string(what) + ": axis " + std::to_string(axis) +
                     " out of range for rank " + std::to_string(ndim));
  }
  return static_cast<std::size_t>(a);
}

struct AxisLayout {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisLayout axis_layout(const Shape& shape, std::size_t axis) {
  AxisLayout l;
  for (std::size_t d = 0; d < axis; ++d) l.outer *= shape[d];
  l.len = shape[axis];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) l.inner *= shape[d];
  return l;
}

std::vector<std::size_t> contiguous_strides(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t d = shape.size(); d-- > 1;) s[d - 1] = s[d] * shape[d];
  return s;
}

// Strides of `in` expressed in the index space of `out` (0 on broadcast axes).
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  const std::size_t nd = out.size();
  const std::size_t offset = nd - in.size();
  Shape padded(nd, 1);
  std::copy(in.begin(), in.end(), padded.begin() + static_cast<long>(offset));
  auto s = contiguous_strides(padded);
  for (std::size_t d = 0; d < nd; ++d) {
    if (padded[d] == 1 && out[d] != 1) s[d] = 0;
  }
  return s;
}

template <typename F>
void broadcast_loop(const Shape& out, const std::vector<std::size_t>& sa,
                    const std::vector<std::size_t>& sb, F&& f) {
  const std::size_t nd = out.size();
  const std::size_t total = shape_numel(out);
  if (nd == 0) {
    f(0, 0, 0);
    return;
  }
  const std::size_t inner = out[nd - 1];
  if (inner == 0) return;
  const std::size_t isa = sa[nd - 1];
  const std::size_t isb = sb[nd - 1];
  std::vector<std::size_t> idx(nd, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t o = 0; o < total; o += inner) {
    for (std::size_t k = 0; k < inner; ++k) f(o + k, ia + k * isa, ib + k * isb);
    for (std::size_t d = nd - 1; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

Tensor binary(const Tensor& a, const Tensor& b, BinaryKind kind, std::string_view op) {
  Shape out = broadcast_shape(a.shape(), b.shape());
  std::vector<double> value(shape_numel(out));
  const auto av = a.data();
  const auto bv = b.data();
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < value.size(); ++i) {
      switch (kind) {
        case BinaryKind::kAdd: value[i] = av[i] + bv[i]; break;
        case BinaryKind::kSub: value[i] = av[i] - bv[i]; break;
        case BinaryKind::kMul: value[i] = av[i] * bv[i]; break;
        case BinaryKind::kDiv: value[i] = av[i] / bv[i]; break;
      }
    }
  } else {
    const auto sa = broadcast_strides(a.shape(), out);
    const auto sb = broadcast_strides(b.shape(), out);
    broadcast_loop(out, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) {
      switch (kind) {
        case BinaryKind::kAdd: value[o] = av[i] + bv[j]; break;
        case BinaryKind::kSub: value[o] = av[i] - bv[j]; break;
        case BinaryKind::kMul: value[o] = av[i] * bv[j]; break;
        case BinaryKind::kDiv: value[o] = av[i] / bv[j]; break;
      }
    });
  }
  const Shape a_shape = a.shape();
  const Shape b_shape = b.shape();
  return detail::make_result(out, std::move(value), op, {a, b}, [=](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& g = self.grad;
    const bool need_a = pa.requires_grad && !pa.grad.empty();
    const bool need_b = pb.requires_grad && !pb.grad.empty();
    const auto sa = broadcast_strides(a_shape, self.shape);
    const auto sb = broadcast_strides(b_shape, self.shape);
    broadcast_loop(self.shape, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) {
      switch (kind) {
        case BinaryKind::kAdd:
          if (need_a) pa.grad[i] += g[o];
          if (need_b) pb.grad[j] += g[o];
          break;
        case BinaryKind::kSub:
          if (need_a) pa.grad[i] += g[o];
          if (need_b) pb.grad[j] -= g[o];
          break;
        case BinaryKind::kMul:
          if (need_a) pa.grad[i] += g[o] * pb.value[j];
          if (need_b) pb.grad[j] += g[o] * pa.value[i];
          break;
        case BinaryKind::kDiv:
          if (need_a) pa.grad[i] += g[o] / pb.value[j];
          if (need_b) pb.grad[j] -= g[o] * pa.value[i] / (pb.value[j] * pb.value[j]);
          break;
      }
    });
  });
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, std::string_view op, Fwd fwd, Deriv deriv) {
  const auto av = a.data();
  std::vector<double> value(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) value[i] = fwd(av[i]);
  return detail::make_result(a.shape(), std::move(value), op, {a}, [deriv](Node& self) {
    Node& p = *self.parents[0];
    if (p.grad.empty()) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      p.grad[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
    }
  });
}

// Shared by softmax and masked_softmax so that an all-ones mask reproduces
// the unmasked result bit for bit.
Tensor softmax_impl(const Tensor& a, int axis, const std::vector<std::uint8_t>* mask,
                    std::string_view op) {
  const std::size_t ax = normalize_axis(axis, a.ndim(), "softmax");
  const AxisLayout l = axis_layout(a.shape(), ax);
  const auto av = a.data();
  std::vector<double> value(av.size(), 0.0);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.len * l.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      bool any = false;
      for (std::size_t j = 0; j < l.len; ++j) {
        const std::size_t idx = base + j * l.inner;
        if (mask && !(*mask)[idx]) continue;
        mx = std::max(mx, av[idx]);
        any = true;
      }
      if (!any) {
        if (l.len == 0) continue;
        throw std::invalid_argument("masked_softmax: a softmax row has every entry masked");
      }
      double total = 0.0;
      for (std::size_t j = 0; j < l.len; ++j) {
        const std::size_t idx = base + j * l.inner;
        if (mask && !(*mask)[idx]) continue;
        value[idx] = std::exp(av[idx] - mx);
        total += value[idx];
      }
      for (std::size_t j = 0; j < l.len; ++j) value[base + j * l.inner] /= total;
    }
  }
  return detail::make_result(a.shape(), std::move(value), op, {a}, [l](Node& self) {
    Node& p = *self.parents[0];
    if (p.grad.empty()) return;
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t in = 0; in < l.inner; ++in) {
        const std::size_t base = o * l.len * l.inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < l.len; ++j) {
          const std::size_t idx = base + j * l.inner;
          dot += g[idx] * y[idx];
        }
        for (std::size_t j = 0; j < l.len; ++j) {
          const std::size_t idx = base + j * l.inner;
          p.grad[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA += G B^T
void gemm_grad_a(const double* g, const double* b, double* da, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      da[i * k + p] += acc;
    }
  }
}

// dB += A^T G
void gemm_grad_b(const double* a, const double* g, double* db, std::size_t m, std::size_t k,
                 std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* dbrow = db + p * n;
      for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
    }
  }
}

enum class Reduce { kSum, kMean, kMax };

Tensor reduce_axis(const Tensor& a, int axis, bool keepdim, Reduce mode, std::string_view op) {
  const bool is_max = mode == Reduce::kMax;
  const std::size_t ax = normalize_axis(axis, a.ndim(), op.data());
  const AxisLayout l = axis_layout(a.shape(), ax);
  if (mode != Reduce::kSum && l.len == 0) {
    throw ShapeError(std::string(op) + " over an empty axis");
  }
  const double factor = mode == Reduce::kMean ? 1.0 / static_cast<double>(l.len) : 1.0;
  Shape out = a.shape();
  if (keepdim) {
    out[ax] = 1;
  } else {
    out.erase(out.begin() + static_cast<long>(ax));
  }
  const auto av = a.data();
  std::vector<double> value(l.outer * l.inner, 0.0);
  std::vector<std::size_t> argmax;
  if (is_max) argmax.assign(value.size(), 0);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t in = 0; in < l.inner; ++in) {
      const std::size_t base = o * l.len * l.inner + in;
      const std::size_t dst = o * l.inner + in;
      if (is_max) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < l.len; ++j) {
          if (av[base + j * l.inner] > av[base + best * l.inner]) best = j;
        }
        value[dst] = av[base + best * l.inner];
        argmax[dst] = best;
      } else {
        double acc = 0.0;
        for (std::size_t j = 0; j < l.len; ++j) acc += av[base + j * l.inner];
        value[dst] = acc * factor;
      }
    }
  }
  return detail::make_result(
      std::move(out), std::move(value), op, {a},
      [l, is_max, factor, argmax = std::move(argmax)](Node& self) {
        Node& p = *self.parents[0];
        if (p.grad.empty()) return;
        for (std::size_t o = 0; o < l.outer; ++o) {
          for (std::size_t in = 0; in < l.inner; ++in) {
            const std::size_t base = o * l.len * l.inner + in;
            const std::size_t src = o * l.inner + in;
            if (is_max) {
              p.grad[base + argmax[src] * l.inner] += self.grad[src];
            } else {
              const double g = self.grad[src] * factor;
              for (std::size_t j = 0; j < l.len; ++j) p.grad[base + j * l.inner] += g;
            }
          }
        }
      });
}

}  // namespace

std::span<const std::string_view> differentiable_ops() { return kDifferentiableOps; }

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t nd = std::max(a.size(), b.size());
  Shape out(nd, 1);
  for (std::size_t d = 0; d < nd; ++d) {
    const std::size_t da = d + a.size() >= nd ? a[d + a.size() - nd] : 1;
    const std::size_t db = d + b.size() >= nd ? b[d + b.size() - nd] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[d] = da == 1 ? db : da;
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kMul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryKind::kDiv, "div"); }

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return factor * x; },
      [factor](double, double) { return factor; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() < 2 || b.ndim() < 2 || b.ndim() > 3) {
    throw ShapeError("matmul: unsupported ranks " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::size_t batch = 1;
  std::size_t m = 0;
  const std::size_t k = a.shape().back();
  std::size_t n = 0;
  Shape out;
  bool batched = false;
  if (b.ndim() == 2) {
    if (b.dim(0) != k) {
      throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
    }
    m = a.numel() / std::max<std::size_t>(k, 1);
    if (k == 0) m = shape_numel(Shape(a.shape().begin(), a.shape().end() - 1));
    n = b.dim(1);
    out = a.shape();
    out.back() = n;
  } else {
    if (a.ndim() != 3 || a.dim(0) != b.dim(0) || b.dim(1) != k) {
      throw ShapeError("matmul: batched shapes disagree " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
    }
    batched = true;
    batch = a.dim(0);
    m = a.dim(1);
    n = b.dim(2);
    out = {batch, m, n};
  }
  std::vector<double> value(shape_numel(out), 0.0);
  const double* av = a.data().data();
  const double* bv = b.data().data();
  for (std::size_t bi = 0; bi < batch; ++bi) {
    gemm_acc(av + bi * m * k, bv + (batched ? bi * k * n : 0), value.data() + bi * m * n, m, k,
             n);
  }
  return detail::make_result(std::move(out), std::move(value), "matmul", {a, b},
                             [=](Node& self) {
                               Node& pa = *self.parents[0];
                               Node& pb = *self.parents[1];
                               for (std::size_t bi = 0; bi < batch; ++bi) {
                                 const double* g = self.grad.data() + bi * m * n;
                                 const std::size_t boff = batched ? bi * k * n : 0;
                                 if (!pa.grad.empty()) {
                                   gemm_grad_a(g, pb.value.data() + boff,
                                               pa.grad.data() + bi * m * k, m, k, n);
                                 }
                                 if (!pb.grad.empty()) {
                                   gemm_grad_b(pa.value.data() + bi * m * k, g,
                                               pb.grad.data() + boff, m, k, n);
                                 }
                               }
                             });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.ndim() != 2 || bias.ndim() != 1 || bias.dim(0) != weight.dim(0) || x.ndim() < 1 ||
      x.shape().back() != weight.dim(1)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + ", weight " +
                     shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const std::size_t in = weight.dim(1);
  const std::size_t out_dim = weight.dim(0);
  const std::size_t rows = in == 0 ? 0 : x.numel() / in;
  Shape out = x.shape();
  out.back() = out_dim;
  std::vector<double> value(rows * out_dim);
  const double* xv = x.data().data();
  const double* wv = weight.data().data();
  const double* bv = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv + r * in;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* wr = wv + o * in;
      value[r * out_dim + o] = bv[o] + dot(xr, wr, in);
    }
  }
  return detail::make_result(
      std::move(out), std::move(value), "linear", {x, weight, bias},
      [rows, in, out_dim](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        const double* g = self.grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g + r * out_dim;
          const double* xr = px.value.data() + r * in;
          for (std::size_t o = 0; o < out_dim; ++o) {
            const double go = gr[o];
            if (go == 0.0) continue;
            if (!px.grad.empty()) {
              axpy(go, pw.value.data() + o * in, px.grad.data() + r * in, in);
            }
            if (!pw.grad.empty()) {
              axpy(go, xr, pw.grad.data() + o * in, in);
            }
            if (!pb.grad.empty()) pb.grad[o] += go;
          }
        }
      });
}

Tensor tanh(const Tensor& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor selu(const Tensor& a) {
  return unary(
      a, "selu",
      [](double x) { return x > 0 ? kSeluScale * x : kSeluScale * kSeluAlpha * std::expm1(x); },
      [](double x, double) {
        return x > 0 ? kSeluScale : kSeluScale * kSeluAlpha * std::exp(x);
      });
}

Tensor softmax(const Tensor& a, int axis) { return softmax_impl(a, axis, nullptr, "softmax"); }

Tensor masked_softmax(const Tensor& a, int axis, const Tensor& mask) {
  const Shape out = broadcast_shape(a.shape(), mask.shape());
  if (out != a.shape()) {
    throw ShapeError("masked_softmax: mask " + shape_str(mask.shape()) +
                     " does not broadcast onto " + shape_str(a.shape()));
  }
  std::vector<std::uint8_t> full(a.numel());
  const auto mv = mask.data();
  const auto sm = broadcast_strides(mask.shape(), out);
  const auto sa = contiguous_strides(out);
  broadcast_loop(out, sa, sm, [&](std::size_t o, std::size_t, std::size_t j) {
    full[o] = mv[j] != 0.0 ? 1 : 0;
  });
  return softmax_impl(a, axis, &full, "masked_softmax");
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int feature_axis,
                  BatchNormStats stats, bool training) {
  const std::size_t ax = normalize_axis(feature_axis, x.ndim(), "batch_norm");
  const AxisLayout l = axis_layout(x.shape(), ax);
  const std::size_t c = l.len;
  if (gamma.numel() != c || beta.numel() != c || stats.running_mean.size() != c ||
      stats.running_var.size() != c) {
    throw ShapeError("batch_norm: feature axis has " + std::to_string(c) +
                     " entries but state holds " + std::to_string(stats.running_mean.size()));
  }
  const std::size_t count = l.outer * l.inner;
  const auto xv = x.data();
  std::vector<double> mean_v(c, 0.0);
  std::vector<double> inv_std(c, 0.0);
  if (training) {
    if (count == 0) throw ShapeError("batch_norm: empty batch in training mode");
    std::vector<double> var_v(c, 0.0);
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t f = 0; f < c; ++f) {
        const double* p = xv.data() + (o * c + f) * l.inner;
        for (std::size_t in = 0; in < l.inner; ++in) mean_v[f] += p[in];
      }
    }
    for (auto& m : mean_v) m /= static_cast<double>(count);
    for (std::size_t o = 0; o < l.outer; ++o) {
      for (std::size_t f = 0; f < c; ++f) {
        const double* p = xv.data() + (o * c + f) * l.inner;
        for (std::size_t in = 0; in < l.inner; ++in) {
          const double d = p[in] - mean_v[f];
          var_v[f] += d * d;
        }
      }
    }
    for (std::size_t f = 0; f < c; ++f) {
      var_v[f] /= static_cast<double>(count);
      inv_std[f] = 1.0 / std::sqrt(var_v[f] + stats.eps);
      const double unbiased =
          count > 1 ? var_v[f] * static_cast<double>(count) / static_cast<double>(count - 1)
                    : var_v[f];
      stats.running_mean[f] =
          (1.0 - stats.momentum) * stats.running_mean[f] + stats.momentum * mean_v[f];
      stats.running_var[f] =
          (1.0 - stats.momentum) * stats.running_var[f] + stats.momentum * unbiased;
    }
  } else {
    for (std::size_t f = 0; f < c; ++f) {
      mean_v[f] = stats.running_mean[f];
      inv_std[f] = 1.0 / std::sqrt(stats.running_var[f] + stats.eps);
    }
  }
  std::vector<double> xhat(xv.size());
  std::vector<double> value(xv.size());
  const auto gv = gamma.data();
  const auto bv = beta.data();
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t f = 0; f < c; ++f) {
      const std::size_t base = (o * c + f) * l.inner;
      for (std::size_t in = 0; in < l.inner; ++in) {
        const double h = (xv[base + in] - mean_v[f]) * inv_std[f];
        xhat[base + in] = h;
        value[base + in] = gv[f] * h + bv[f];
      }
    }
  }
  return detail::make_result(
      x.shape(), std::move(value), "batch_norm", {x, gamma, beta},
      [l, c, count, training, inv_std = std::move(inv_std), xhat = std::move(xhat)](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        const auto& g = self.grad;
        std::vector<double> sum_g(c, 0.0);
        std::vector<double> sum_gx(c, 0.0);
        for (std::size_t o = 0; o < l.outer; ++o) {
          for (std::size_t f = 0; f < c; ++f) {
            const std::size_t base = (o * c + f) * l.inner;
            for (std::size_t in = 0; in < l.inner; ++in) {
              sum_g[f] += g[base + in];
              sum_gx[f] += g[base + in] * xhat[base + in];
            }
          }
        }
        if (!pg.grad.empty()) {
          for (std::size_t f = 0; f < c; ++f) pg.grad[f] += sum_gx[f];
        }
        if (!pb.grad.empty()) {
          for (std::size_t f = 0; f < c; ++f) pb.grad[f] += sum_g[f];
        }
        if (px.grad.empty()) return;
        const double inv_n = 1.0 / static_cast<double>(count);
        for (std::size_t o = 0; o < l.outer; ++o) {
          for (std::size_t f = 0; f < c; ++f) {
            const std::size_t base = (o * c + f) * l.inner;
            const double k = pg.value[f] * inv_std[f];
            for (std::size_t in = 0; in < l.inner; ++in) {
              const std::size_t i = base + in;
              if (training) {
                px.grad[i] += k * (g[i] - sum_g[f] * inv_n - xhat[i] * sum_gx[f] * inv_n);
              } else {
                px.grad[i] += k * g[i];
              }
            }
          }
        }
      });
}

Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t pad_left, std::size_t pad_right) {
  if (x.ndim() != 3 || weight.ndim() != 3 || bias.ndim() != 1 || x.dim(1) != weight.dim(1) ||
      bias.dim(0) != weight.dim(0) || stride == 0) {
    throw ShapeError("conv1d: input " + shape_str(x.shape()) + ", weight " +
                     shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const std::size_t n = x.dim(0);
  const std::size_t cin = x.dim(1);
  const std::size_t len = x.dim(2);
  const std::size_t cout = weight.dim(0);
  const std::size_t k = weight.dim(2);
  if (len + pad_left + pad_right < k) {
    throw ShapeError("conv1d: input length " + std::to_string(len) +
                     " shorter than kernel span " + std::to_string(k));
  }
  const std::size_t lout = (len + pad_left + pad_right - k) / stride + 1;
  const std::size_t span = cin * k;

  // im2col: row (b, t) holds the zero-padded receptive field, channel-major.
  auto cols = std::make_shared<std::vector<double>>(n * lout * span, 0.0);
  const double* xv = x.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t t = 0; t < lout; ++t) {
      double* row = cols->data() + (b * lout + t) * span;
      const long pos0 = static_cast<long>(t * stride) - static_cast<long>(pad_left);
      const long lo = std::max(0L, -pos0);
      const long hi = std::min(static_cast<long>(k), static_cast<long>(len) - pos0);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* xr = xv + (b * cin + ci) * len + pos0;
        for (long kk = lo; kk < hi; ++kk) row[ci * k + kk] = xr[kk];
      }
    }
  }

  std::vector<double> value(n * cout * lout);
  const double* wv = weight.data().data();
  const double* bv = bias.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t t = 0; t < lout; ++t) {
      const double* row = cols->data() + (b * lout + t) * span;
      for (std::size_t co = 0; co < cout; ++co) {
        value[(b * cout + co) * lout + t] = bv[co] + dot(wv + co * span, row, span);
      }
    }
  }
  return detail::make_result(
      {n, cout, lout}, std::move(value), "conv1d", {x, weight, bias},
      [=](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        std::vector<double> dcol(px.grad.empty() ? 0 : span);
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t t = 0; t < lout; ++t) {
            const double* row = cols->data() + (b * lout + t) * span;
            if (!dcol.empty()) std::fill(dcol.begin(), dcol.end(), 0.0);
            for (std::size_t co = 0; co < cout; ++co) {
              const double gt = self.grad[(b * cout + co) * lout + t];
              if (gt == 0.0) continue;
              if (!pb.grad.empty()) pb.grad[co] += gt;
              if (!pw.grad.empty()) axpy(gt, row, pw.grad.data() + co * span, span);
              if (!dcol.empty()) axpy(gt, pw.value.data() + co * span, dcol.data(), span);
            }
            if (dcol.empty()) continue;
            const long pos0 = static_cast<long>(t * stride) - static_cast<long>(pad_left);
            const long lo = std::max(0L, -pos0);
            const long hi = std::min(static_cast<long>(k), static_cast<long>(len) - pos0);
            for (std::size_t ci = 0; ci < cin; ++ci) {
              double* dx = px.grad.data() + (b * cin + ci) * len + pos0;
              for (long kk = lo; kk < hi; ++kk) dx[kk] += dcol[ci * k + kk];
            }
          }
        }
      });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return detail::make_result(std::move(shape), a.to_vector(), "reshape", {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (p.grad.empty()) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& order) {
  const std::size_t nd = a.ndim();
  if (order.size() != nd) throw ShapeError("permute: order rank mismatch");
  std::vector<bool> seen(nd, false);
  for (auto o : order) {
    if (o >= nd || seen[o]) throw ShapeError("permute: invalid axis order");
    seen[o] = true;
  }
  Shape out(nd);
  const auto in_strides = contiguous_strides(a.shape());
  std::vector<std::size_t> src_strides(nd);
  for (std::size_t d = 0; d < nd; ++d) {
    out[d] = a.dim(order[d]);
    src_strides[d] = in_strides[order[d]];
  }
  // index map out-flat -> in-flat
  std::vector<std::size_t> map(a.numel());
  const auto zero = std::vector<std::size_t>(nd, 0);
  broadcast_loop(out, src_strides, zero,
                 [&](std::size_t o, std::size_t i, std::size_t) { map[o] = i; });
  const auto av = a.data();
  std::vector<double> value(map.size());
  for (std::size_t o = 0; o < map.size(); ++o) value[o] = av[map[o]];
  return detail::make_result(std::move(out), std::move(value), "permute", {a},
                             [map = std::move(map)](Node& self) {
                               Node& p = *self.parents[0];
                               if (p.grad.empty()) return;
                               for (std::size_t o = 0; o < map.size(); ++o) {
                                 p.grad[map[o]] += self.grad[o];
                               }
                             });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const std::size_t ax = normalize_axis(axis, parts[0].ndim(), "concat");
  Shape out = parts[0].shape();
  out[ax] = 0;
  for (const auto& p : parts) {
    if (p.ndim() != out.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < out.size(); ++d) {
      if (d != ax && p.dim(d) != out[d]) {
        throw ShapeError("concat: " + shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
      }
    }
    out[ax] += p.dim(ax);
  }
  const AxisLayout l = axis_layout(out, ax);
  std::vector<std::size_t> lens;
  for (const auto& p : parts) lens.push_back(p.dim(ax));
  std::vector<double> value(shape_numel(out));
  for (std::size_t o = 0; o < l.outer; ++o) {
    std::size_t offset = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
      const std::size_t block = lens[pi] * l.inner;
      const auto pv = parts[pi].data();
      std::copy_n(pv.begin() + static_cast<long>(o * block), block,
                  value.begin() + static_cast<long>(o * l.len * l.inner + offset));
      offset += block;
    }
  }
  return detail::make_result(std::move(out), std::move(value), "concat", parts,
                             [l, lens](Node& self) {
                               for (std::size_t o = 0; o < l.outer; ++o) {
                                 std::size_t offset = 0;
                                 for (std::size_t pi = 0; pi < lens.size(); ++pi) {
                                   const std::size_t block = lens[pi] * l.inner;
                                   Node& p = *self.parents[pi];
                                   if (!p.grad.empty()) {
                                     const double* g =
                                         self.grad.data() + o * l.len * l.inner + offset;
                                     double* dst = p.grad.data() + o * block;
                                     for (std::size_t i = 0; i < block; ++i) dst[i] += g[i];
                                   }
                                   offset += block;
                                 }
                               }
                             });
}

Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t length) {
  const std::size_t ax = normalize_axis(axis, a.ndim(), "slice");
  if (start + length > a.dim(ax)) {
    throw ShapeError("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") exceeds axis of length " + std::to_string(a.dim(ax)));
  }
  const AxisLayout l = axis_layout(a.shape(), ax);
  Shape out = a.shape();
  out[ax] = length;
  const auto av = a.data();
  std::vector<double> value(shape_numel(out));
  const std::size_t block = length * l.inner;
  for (std::size_t o = 0; o < l.outer; ++o) {
    std::copy_n(av.begin() + static_cast<long>(o * l.len * l.inner + start * l.inner), block,
                value.begin() + static_cast<long>(o * block));
  }
  return detail::make_result(std::move(out), std::move(value), "slice", {a},
                             [l, start, block](Node& self) {
                               Node& p = *self.parents[0];
                               if (p.grad.empty()) return;
                               for (std::size_t o = 0; o < l.outer; ++o) {
                                 double* dst = p.grad.data() + o * l.len * l.inner + start * l.inner;
                                 const double* g = self.grad.data() + o * block;
                                 for (std::size_t i = 0; i < block; ++i) dst[i] += g[i];
                               }
                             });
}

Tensor sum(const Tensor& a) {
  const auto av = a.data();
  const double total = std::accumulate(av.begin(), av.end(), 0.0);
  return detail::make_result({}, {total}, "sum", {a}, [](Node& self) {
    Node& p = *self.parents[0];
    if (p.grad.empty()) return;
    for (auto& g : p.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of an empty tensor");
  const auto av = a.data();
  const double n = static_cast<double>(av.size());
  const double total = std::accumulate(av.begin(), av.end(), 0.0) / n;
  return detail::make_result({}, {total}, "mean", {a}, [n](Node& self) {
    Node& p = *self.parents[0];
    if (p.grad.empty()) return;
    for (auto& g : p.grad) g += self.grad[0] / n;
  });
}

Tensor sum_axis(const Tensor& a, int axis, bool keepdim) {
  return reduce_axis(a, axis, keepdim, Reduce::kSum, "sum_axis");
}

Tensor mean_axis(const Tensor& a, int axis, bool keepdim) {
  return reduce_axis(a, axis, keepdim, Reduce::kMean, "mean_axis");
}

Tensor max_axis(const Tensor& a, int axis, bool keepdim) {
  return reduce_axis(a, axis, keepdim, Reduce::kMax, "max_axis");
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     std::span<const double> weights) {
  if (logits.ndim() != 2 || logits.dim(0) != targets.size() || weights.size() != targets.size()) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " with " +
                     std::to_string(targets.size()) + " targets and " +
                     std::to_string(weights.size()) + " weights");
  }
  const std::size_t rows = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  const auto z = logits.data();
  std::vector<double> probs(z.size());
  double total_w = 0.0;
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= classes) {
      throw std::invalid_argument("cross_entropy: target out of range");
    }
    const double* zr = z.data() + r * classes;
    const double mx = *std::max_element(zr, zr + classes);
    double s = 0.0;
    for (std::size_t c = 0; c < classes; ++c) s += std::exp(zr[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] = std::exp(zr[c] - lse);
    total_w += weights[r];
    if (weights[r] != 0.0) loss += weights[r] * (lse - zr[targets[r]]);
  }
  const double norm = total_w > 0 ? 1.0 / total_w : 0.0;
  std::vector<int> t(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  return detail::make_result(
      {}, {loss * norm}, "cross_entropy", {logits},
      [rows, classes, norm, t = std::move(t), w = std::move(w),
       probs = std::move(probs)](Node& self) {
        Node& p = *self.parents[0];
        if (p.grad.empty()) return;
        const double g = self.grad[0] * norm;
        for (std::size_t r = 0; r < rows; ++r) {
          if (w[r] == 0.0) continue;
          for (std::size_t c = 0; c < classes; ++c) {
            const double onehot = static_cast<int>(c) == t[r] ? 1.0 : 0.0;
            p.grad[r * classes + c] += g * w[r] * (probs[r * classes + c] - onehot);
          }
        }
      });
}

Tensor bce_with_logits(const Tensor& logits, std::span<const double> targets,
                       std::span<const double> weights) {
  if (logits.numel() != targets.size() || weights.size() != targets.size()) {
    throw ShapeError("bce_with_logits: " + std::to_string(logits.numel()) + " logits, " +
                     std::to_string(targets.size()) + " targets, " +
                     std::to_string(weights.size()) + " weights");
  }
  const auto z = logits.data();
  double total_w = 0.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    total_w += weights[i];
    if (weights[i] == 0.0) continue;
    loss += weights[i] *
            (std::max(z[i], 0.0) - z[i] * targets[i] + std::log1p(std::exp(-std::abs(z[i]))));
  }
  const double norm = total_w > 0 ? 1.0 / total_w : 0.0;
  std::vector<double> y(targets.begin(), targets.end());
  std::vector<double> w(weights.begin(), weights.end());
  return detail::make_result(
      {}, {loss * norm}, "bce_with_logits", {logits},
      [norm, y = std::move(y), w = std::move(w)](Node& self) {
        Node& p = *self.parents[0];
        if (p.grad.empty()) return;
        const double g = self.grad[0] * norm;
        for (std::size_t i = 0; i < y.size(); ++i) {
          if (w[i] == 0.0) continue;
          const double zi = p.value[i];
          const double s = zi >= 0 ? 1.0 / (1.0 + std::exp(-zi))
                                   : std::exp(zi) / (1.0 + std::exp(zi));
          p.grad[i] += g * w[i] * (s - y[i]);
        }
      });
}

Tensor stop_gradient(const Tensor& a) {
  auto node = std::make_shared<Node>();
  node->shape = a.shape();
  node->value = a.to_vector();
  node->op = "stop_gradient";
  node->blocks_gradient = true;
  node->parents.push_back(a.node());
  node->id = detail::next_node_id();
  return Tensor(std::move(node));
}

}  // namespace bam
