#include "mmnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <numeric>

#include "mmnet/gemm.hpp"

namespace mmnet {
namespace {

using detail::AlignedBuf;
using detail::Node;
using detail::NodePtr;

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

struct Op {
  NodePtr node;
  bool track = false;
  const char* name = "";
  double* out() { return node->val.data(); }
};

Op make_op(const char* name, Shape shape,
           std::initializer_list<const Tensor*> inputs) {
  Op op;
  op.name = name;
  op.node = std::make_shared<Node>();
  const int n = shape_numel(shape);
  op.node->shape = std::move(shape);
  op.node->val = AlignedBuf(static_cast<std::size_t>(n));
  bool any = false;
  for (const Tensor* t : inputs) {
    if (!t->defined()) throw Error("op input is an undefined tensor");
    if (t->requires_grad()) any = true;
  }
  op.track = any && grad_enabled();
  if (op.track) {
    op.node->requires_grad = true;
    op.node->is_leaf = false;
    op.node->parents.reserve(inputs.size());
    for (const Tensor* t : inputs) op.node->parents.push_back(t->node());
  }
  return op;
}

Tensor seal(Op& op, std::function<void(Node&)> backward) {
  check_finite(op.name, {op.node->val.data(), op.node->val.size()});
  if (op.track) op.node->backward_fn = std::move(backward);
  return Tensor(std::move(op.node));
}

// Writes f(i) into p's gradient, assigning on the first contribution and
// accumulating afterwards.
template <class F>
void scatter_grad(Node& p, int n, F&& f) {
  bool fresh;
  double* dst = p.raw_grad(fresh);
  if (fresh) {
    for (int i = 0; i < n; ++i) dst[i] = f(i);
  } else {
    for (int i = 0; i < n; ++i) dst[i] += f(i);
  }
}

void require(bool cond, const char* op, const std::string& msg) {
  if (!cond) throw DimensionError(std::string(op) + ": " + msg);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!same_shape(a.shape(), b.shape())) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_chw(const char* op, const Tensor& x) {
  require(x.ndim() == 3, op, "expected a [C,H,W] tensor, got " +
                                  shape_str(x.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Op op = make_op("add", a.shape(), {&a, &b});
  const int n = a.numel();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* out = op.out();
  for (int i = 0; i < n; ++i) out[i] = pa[i] + pb[i];
  NodePtr na = a.node(), nb = b.node();
  return seal(op, [na, nb, n](Node& self) {
    const double* g = self.grad.data();
    if (na->requires_grad) na->add_grad(g, n);
    if (nb->requires_grad) nb->add_grad(g, n);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Op op = make_op("sub", a.shape(), {&a, &b});
  const int n = a.numel();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* out = op.out();
  for (int i = 0; i < n; ++i) out[i] = pa[i] - pb[i];
  NodePtr na = a.node(), nb = b.node();
  return seal(op, [na, nb, n](Node& self) {
    const double* g = self.grad.data();
    if (na->requires_grad) na->add_grad(g, n);
    if (nb->requires_grad)
      scatter_grad(*nb, n, [g](int i) { return -g[i]; });
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Op op = make_op("mul", a.shape(), {&a, &b});
  const int n = a.numel();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* out = op.out();
  for (int i = 0; i < n; ++i) out[i] = pa[i] * pb[i];
  NodePtr na = a.node(), nb = b.node();
  return seal(op, [na, nb, n](Node& self) {
    const double* g = self.grad.data();
    const double* va = na->val.data();
    const double* vb = nb->val.data();
    if (na->requires_grad)
      scatter_grad(*na, n, [g, vb](int i) { return g[i] * vb[i]; });
    if (nb->requires_grad)
      scatter_grad(*nb, n, [g, va](int i) { return g[i] * va[i]; });
  });
}

Tensor add_scalar(const Tensor& a, double c) {
  Op op = make_op("add_scalar", a.shape(), {&a});
  const int n = a.numel();
  const double* pa = a.data().data();
  double* out = op.out();
  for (int i = 0; i < n; ++i) out[i] = pa[i] + c;
  NodePtr na = a.node();
  return seal(op, [na, n](Node& self) { na->add_grad(self.grad.data(), n); });
}

Tensor mul_scalar(const Tensor& a, double c) {
  Op op = make_op("mul_scalar", a.shape(), {&a});
  const int n = a.numel();
  const double* pa = a.data().data();
  double* out = op.out();
  for (int i = 0; i < n; ++i) out[i] = pa[i] * c;
  NodePtr na = a.node();
  return seal(op, [na, n, c](Node& self) {
    const double* g = self.grad.data();
    scatter_grad(*na, n, [g, c](int i) { return g[i] * c; });
  });
}

// ---------------------------------------------------------------------------
// Activations

Tensor sigmoid(const Tensor& x) {
  Op op = make_op("sigmoid", x.shape(), {&x});
  const int n = x.numel();
  const double* px = x.data().data();
  double* out = op.out();
  for (int i = 0; i < n; ++i) {
    const double v = px[i];
    if (v >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      out[i] = e / (1.0 + e);
    }
  }
  NodePtr nx = x.node();
  return seal(op, [nx, n](Node& self) {
    const double* g = self.grad.data();
    const double* y = self.val.data();
    scatter_grad(*nx, n, [g, y](int i) { return g[i] * y[i] * (1.0 - y[i]); });
  });
}

Tensor relu(const Tensor& x) {
  Op op = make_op("relu", x.shape(), {&x});
  const int n = x.numel();
  const double* px = x.data().data();
  double* out = op.out();
  for (int i = 0; i < n; ++i) out[i] = px[i] > 0.0 ? px[i] : 0.0;
  NodePtr nx = x.node();
  return seal(op, [nx, n](Node& self) {
    const double* g = self.grad.data();
    const double* v = nx->val.data();
    scatter_grad(*nx, n, [g, v](int i) { return v[i] > 0.0 ? g[i] : 0.0; });
  });
}

Tensor gelu(const Tensor& x) {
  Op op = make_op("gelu", x.shape(), {&x});
  const int n = x.numel();
  const double* px = x.data().data();
  double* out = op.out();
  // The derivative costs another erf+exp sweep; computing it here while the
  // inputs are hot halves the transcendental work of the whole pass.
  std::shared_ptr<AlignedBuf> deriv;
  double* dv = nullptr;
  if (op.track) {
    deriv = std::make_shared<AlignedBuf>(static_cast<std::size_t>(n));
    dv = deriv->data();
  }
  for (int i = 0; i < n; ++i) {
    const double v = px[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    out[i] = v * cdf;
    if (dv) {
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      dv[i] = cdf + v * pdf;
    }
  }
  NodePtr nx = x.node();
  return seal(op, [nx, n, deriv](Node& self) {
    const double* g = self.grad.data();
    const double* d = deriv->data();
    scatter_grad(*nx, n, [g, d](int i) { return g[i] * d[i]; });
  });
}

// ---------------------------------------------------------------------------
// Channel pooling / broadcasting

Tensor broadcast_mul(const Tensor& x, const Tensor& map) {
  require_chw("broadcast_mul", x);
  require_chw("broadcast_mul", map);
  require(map.dim(0) == 1, "broadcast_mul",
          "attention map must have a single channel");
  require(map.dim(1) == x.dim(1) && map.dim(2) == x.dim(2), "broadcast_mul",
          "map spatial size " + shape_str(map.shape()) +
              " does not match features " + shape_str(x.shape()));
  Op op = make_op("broadcast_mul", x.shape(), {&x, &map});
  const int c = x.dim(0), hw = x.dim(1) * x.dim(2);
  const double* px = x.data().data();
  const double* pm = map.data().data();
  double* out = op.out();
  for (int ci = 0; ci < c; ++ci) {
    const double* row = px + static_cast<std::size_t>(ci) * hw;
    double* orow = out + static_cast<std::size_t>(ci) * hw;
    for (int p = 0; p < hw; ++p) orow[p] = row[p] * pm[p];
  }
  NodePtr nx = x.node(), nm = map.node();
  return seal(op, [nx, nm, c, hw](Node& self) {
    const double* g = self.grad.data();
    const double* vx = nx->val.data();
    const double* vm = nm->val.data();
    if (nx->requires_grad) {
      bool fresh;
      double* dst = nx->raw_grad(fresh);
      for (int ci = 0; ci < c; ++ci) {
        const double* grow = g + static_cast<std::size_t>(ci) * hw;
        double* drow = dst + static_cast<std::size_t>(ci) * hw;
        if (fresh) {
          for (int p = 0; p < hw; ++p) drow[p] = grow[p] * vm[p];
        } else {
          for (int p = 0; p < hw; ++p) drow[p] += grow[p] * vm[p];
        }
      }
    }
    if (nm->requires_grad) {
      bool fresh;
      double* dst = nm->raw_grad(fresh);
      if (fresh) std::memset(dst, 0, sizeof(double) * hw);
      for (int ci = 0; ci < c; ++ci) {
        const double* grow = g + static_cast<std::size_t>(ci) * hw;
        const double* xrow = vx + static_cast<std::size_t>(ci) * hw;
        for (int p = 0; p < hw; ++p) dst[p] += grow[p] * xrow[p];
      }
    }
  });
}

Tensor channel_max(const Tensor& x) {
  require_chw("channel_max", x);
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2), hw = h * w;
  Op op = make_op("channel_max", {1, h, w}, {&x});
  const double* px = x.data().data();
  double* out = op.out();
  auto argmax = std::make_shared<std::vector<int>>(hw, 0);
  std::memcpy(out, px, sizeof(double) * hw);
  for (int ci = 1; ci < c; ++ci) {
    const double* row = px + static_cast<std::size_t>(ci) * hw;
    for (int p = 0; p < hw; ++p) {
      if (row[p] > out[p]) {  // strict: ties keep the lowest channel
        out[p] = row[p];
        (*argmax)[p] = ci;
      }
    }
  }
  NodePtr nx = x.node();
  return seal(op, [nx, argmax, hw](Node& self) {
    const double* g = self.grad.data();
    double* dst = nx->zeroed_grad();
    for (int p = 0; p < hw; ++p)
      dst[static_cast<std::size_t>((*argmax)[p]) * hw + p] += g[p];
  });
}

Tensor channel_avg(const Tensor& x) {
  require_chw("channel_avg", x);
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2), hw = h * w;
  Op op = make_op("channel_avg", {1, h, w}, {&x});
  const double* px = x.data().data();
  double* out = op.out();
  std::memcpy(out, px, sizeof(double) * hw);
  for (int ci = 1; ci < c; ++ci) {
    const double* row = px + static_cast<std::size_t>(ci) * hw;
    for (int p = 0; p < hw; ++p) out[p] += row[p];
  }
  const double inv = 1.0 / c;
  for (int p = 0; p < hw; ++p) out[p] *= inv;
  NodePtr nx = x.node();
  return seal(op, [nx, c, hw, inv](Node& self) {
    const double* g = self.grad.data();
    bool fresh;
    double* dst = nx->raw_grad(fresh);
    for (int ci = 0; ci < c; ++ci) {
      double* drow = dst + static_cast<std::size_t>(ci) * hw;
      if (fresh) {
        for (int p = 0; p < hw; ++p) drow[p] = g[p] * inv;
      } else {
        for (int p = 0; p < hw; ++p) drow[p] += g[p] * inv;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Spatial pooling

Tensor spatial_maxpool2(const Tensor& x) {
  require_chw("spatial_maxpool2", x);
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw GeometryError("spatial_maxpool2: input " + shape_str(x.shape()) +
                        " has odd spatial size");
  }
  const int ho = h / 2, wo = w / 2;
  Op op = make_op("spatial_maxpool2", {c, ho, wo}, {&x});
  const double* px = x.data().data();
  double* out = op.out();
  auto winner = std::make_shared<std::vector<int>>(
      static_cast<std::size_t>(c) * ho * wo);
  for (int ci = 0; ci < c; ++ci) {
    const double* plane = px + static_cast<std::size_t>(ci) * h * w;
    double* oplane = out + static_cast<std::size_t>(ci) * ho * wo;
    int* wplane = winner->data() + static_cast<std::size_t>(ci) * ho * wo;
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j) {
        const int base = (2 * i) * w + 2 * j;
        // Window scanned in row-major order; strict > keeps the first max.
        int best = base;
        double bv = plane[base];
        const int cands[3] = {base + 1, base + w, base + w + 1};
        for (int cand : cands) {
          if (plane[cand] > bv) {
            bv = plane[cand];
            best = cand;
          }
        }
        oplane[i * wo + j] = bv;
        wplane[i * wo + j] = best;
      }
    }
  }
  NodePtr nx = x.node();
  const int n_out = c * ho * wo, hw = h * w, howo = ho * wo;
  return seal(op, [nx, winner, n_out, hw, howo](Node& self) {
    const double* g = self.grad.data();
    double* dst = nx->zeroed_grad();
    for (int i = 0; i < n_out; ++i) {
      const int ci = i / howo;
      dst[static_cast<std::size_t>(ci) * hw + (*winner)[i]] += g[i];
    }
  });
}

Tensor spatial_avgpool(const Tensor& x, int k) {
  require_chw("spatial_avgpool", x);
  if (k <= 0) throw GeometryError("spatial_avgpool: window must be positive");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (h % k != 0 || w % k != 0) {
    throw GeometryError("spatial_avgpool: input " + shape_str(x.shape()) +
                        " is not divisible by window " + std::to_string(k));
  }
  const int ho = h / k, wo = w / k;
  Op op = make_op("spatial_avgpool", {c, ho, wo}, {&x});
  const double* px = x.data().data();
  double* out = op.out();
  const double inv = 1.0 / (static_cast<double>(k) * k);
  for (int ci = 0; ci < c; ++ci) {
    const double* plane = px + static_cast<std::size_t>(ci) * h * w;
    double* oplane = out + static_cast<std::size_t>(ci) * ho * wo;
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j) {
        double acc = 0.0;
        for (int di = 0; di < k; ++di) {
          const double* row = plane + (i * k + di) * w + j * k;
          for (int dj = 0; dj < k; ++dj) acc += row[dj];
        }
        oplane[i * wo + j] = acc * inv;
      }
    }
  }
  NodePtr nx = x.node();
  return seal(op, [nx, c, h, w, ho, wo, k, inv](Node& self) {
    const double* g = self.grad.data();
    bool fresh;
    double* dst = nx->raw_grad(fresh);
    for (int ci = 0; ci < c; ++ci) {
      const double* gplane = g + static_cast<std::size_t>(ci) * ho * wo;
      double* dplane = dst + static_cast<std::size_t>(ci) * h * w;
      for (int i = 0; i < h; ++i) {
        const double* grow = gplane + (i / k) * wo;
        double* drow = dplane + i * w;
        if (fresh) {
          for (int j = 0; j < w; ++j) drow[j] = grow[j / k] * inv;
        } else {
          for (int j = 0; j < w; ++j) drow[j] += grow[j / k] * inv;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM)

namespace {

// col is [Cin*k*k, Ho*Wo]; row (ci,ki,kj) holds the input values each output
// position sees at that kernel tap.
void im2col(const double* x, int cin, int h, int w, int k, int stride, int pad,
            int ho, int wo, double* col) {
  for (int ci = 0; ci < cin; ++ci) {
    const double* plane = x + static_cast<std::size_t>(ci) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* row =
            col + (static_cast<std::size_t>(ci) * k * k + ki * k + kj) *
                      (static_cast<std::size_t>(ho) * wo);
        for (int oi = 0; oi < ho; ++oi) {
          const int ii = oi * stride + ki - pad;
          double* orow = row + static_cast<std::size_t>(oi) * wo;
          if (ii < 0 || ii >= h) {
            std::memset(orow, 0, sizeof(double) * wo);
            continue;
          }
          const double* irow = plane + static_cast<std::size_t>(ii) * w;
          for (int oj = 0; oj < wo; ++oj) {
            const int jj = oj * stride + kj - pad;
            orow[oj] = (jj >= 0 && jj < w) ? irow[jj] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, int cin, int h, int w, int k, int stride,
                int pad, int ho, int wo, double* x) {
  for (int ci = 0; ci < cin; ++ci) {
    double* plane = x + static_cast<std::size_t>(ci) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* row =
            col + (static_cast<std::size_t>(ci) * k * k + ki * k + kj) *
                      (static_cast<std::size_t>(ho) * wo);
        for (int oi = 0; oi < ho; ++oi) {
          const int ii = oi * stride + ki - pad;
          if (ii < 0 || ii >= h) continue;
          const double* grow = row + static_cast<std::size_t>(oi) * wo;
          double* irow = plane + static_cast<std::size_t>(ii) * w;
          for (int oj = 0; oj < wo; ++oj) {
            const int jj = oj * stride + kj - pad;
            if (jj >= 0 && jj < w) irow[jj] += grow[oj];
          }
        }
      }
    }
  }
}

thread_local std::vector<double> conv_scratch;

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int padding) {
  require_chw("conv2d", x);
  require(w.ndim() == 4, "conv2d",
          "weight must be [Cout,Cin,k,k], got " + shape_str(w.shape()));
  require(b.ndim() == 1, "conv2d", "bias must be 1-D");
  const int cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin) {
    throw DimensionError("conv2d: weight expects " + std::to_string(w.dim(1)) +
                         " input channels, input has " + std::to_string(cin));
  }
  require(w.dim(3) == k, "conv2d", "kernel must be square");
  require(b.dim(0) == cout, "conv2d", "bias length must equal Cout");
  if (k != 1 && k != 3)
    throw GeometryError("conv2d: kernel size must be 1 or 3");
  if (stride < 1) throw GeometryError("conv2d: stride must be positive");
  if (padding < 0) throw GeometryError("conv2d: padding must be non-negative");
  const int ho = (h + 2 * padding - k) / stride + 1;
  const int wo = (wd + 2 * padding - k) / stride + 1;
  if (h + 2 * padding < k || wd + 2 * padding < k || ho < 1 || wo < 1) {
    throw GeometryError("conv2d: empty output for input " +
                        shape_str(x.shape()) + " with k=" + std::to_string(k) +
                        " stride=" + std::to_string(stride) +
                        " pad=" + std::to_string(padding));
  }

  Op op = make_op("conv2d", {cout, ho, wo}, {&x, &w, &b});
  const int npx = ho * wo;
  const int krows = cin * k * k;
  const double* px = x.data().data();
  const double* pw = w.data().data();
  const double* pb = b.data().data();
  double* out = op.out();

  // 1x1 stride-1 convolutions are a plain GEMM over the input; everything
  // else goes through an im2col buffer that backward reuses.
  const bool direct = (k == 1 && stride == 1 && padding == 0);
  std::shared_ptr<AlignedBuf> col;
  const double* col_data = px;
  if (!direct) {
    col = std::make_shared<AlignedBuf>(static_cast<std::size_t>(krows) * npx);
    im2col(px, cin, h, wd, k, stride, padding, ho, wo, col->data());
    col_data = col->data();
  }
  dgemm(false, false, cout, npx, krows, 1.0, pw, krows, col_data, npx, 0.0,
        out, npx);
  for (int o = 0; o < cout; ++o) {
    const double bias = pb[o];
    double* row = out + static_cast<std::size_t>(o) * npx;
    for (int p = 0; p < npx; ++p) row[p] += bias;
  }

  NodePtr nx = x.node(), nw = w.node(), nb = b.node();
  return seal(op, [nx, nw, nb, col, direct, cin, h, wd, k, stride, padding, ho,
                   wo, cout, npx, krows](Node& self) {
    const double* g = self.grad.data();
    if (nb->requires_grad) {
      scatter_grad(*nb, cout, [g, npx](int o) {
        const double* row = g + static_cast<std::size_t>(o) * npx;
        double acc = 0.0;
        for (int p = 0; p < npx; ++p) acc += row[p];
        return acc;
      });
    }
    const double* col_data = direct ? nx->val.data() : col->data();
    if (nw->requires_grad) {
      auto [dw, beta] = nw->gemm_grad_target();
      // dW[cout, krows] = g[cout, npx] * col^T
      dgemm(false, true, cout, krows, npx, 1.0, g, npx, col_data, npx, beta,
            dw, krows);
    }
    if (nx->requires_grad) {
      if (direct) {
        auto [dx, beta] = nx->gemm_grad_target();
        // dX[cin, npx] = W^T[cin, cout] * g[cout, npx]
        dgemm(true, false, cin, npx, cout, 1.0, nw->val.data(), krows, g, npx,
              beta, dx, npx);
      } else {
        conv_scratch.resize(static_cast<std::size_t>(krows) * npx);
        dgemm(true, false, krows, npx, cout, 1.0, nw->val.data(), krows, g,
              npx, 0.0, conv_scratch.data(), npx);
        double* dx = nx->zeroed_grad();
        col2im_add(conv_scratch.data(), cin, h, wd, k, stride, padding, ho, wo,
                   dx);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Dense algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2, "matmul", "expects 2-D operands");
  const int m = a.dim(0), ka = a.dim(1), kb = b.dim(0), n = b.dim(1);
  if (ka != kb) {
    throw DimensionError("matmul: inner dimensions differ, " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Op op = make_op("matmul", {m, n}, {&a, &b});
  dgemm(false, false, m, n, ka, 1.0, a.data().data(), ka, b.data().data(), n,
        0.0, op.out(), n);
  NodePtr na = a.node(), nb = b.node();
  return seal(op, [na, nb, m, n, ka](Node& self) {
    const double* g = self.grad.data();
    if (na->requires_grad) {
      auto [da, beta] = na->gemm_grad_target();
      dgemm(false, true, m, ka, n, 1.0, g, n, nb->val.data(), n, beta, da, ka);
    }
    if (nb->requires_grad) {
      auto [db, beta] = nb->gemm_grad_target();
      dgemm(true, false, ka, n, m, 1.0, na->val.data(), ka, g, n, beta, db, n);
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.ndim() == 2, "linear", "input must be [T,in]");
  require(w.ndim() == 2, "linear", "weight must be [in,out]");
  require(b.ndim() == 1, "linear", "bias must be 1-D");
  const int t = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  if (w.dim(0) != in || b.dim(0) != out_dim) {
    throw DimensionError("linear: incompatible shapes x" +
                         shape_str(x.shape()) + " w" + shape_str(w.shape()) +
                         " b" + shape_str(b.shape()));
  }
  Op op = make_op("linear", {t, out_dim}, {&x, &w, &b});
  double* out = op.out();
  dgemm(false, false, t, out_dim, in, 1.0, x.data().data(), in,
        w.data().data(), out_dim, 0.0, out, out_dim);
  const double* pb = b.data().data();
  for (int r = 0; r < t; ++r) {
    double* row = out + static_cast<std::size_t>(r) * out_dim;
    for (int j = 0; j < out_dim; ++j) row[j] += pb[j];
  }
  NodePtr nx = x.node(), nw = w.node(), nb = b.node();
  return seal(op, [nx, nw, nb, t, in, out_dim](Node& self) {
    const double* g = self.grad.data();
    if (nb->requires_grad) {
      scatter_grad(*nb, out_dim, [g, t, out_dim](int j) {
        double acc = 0.0;
        for (int r = 0; r < t; ++r)
          acc += g[static_cast<std::size_t>(r) * out_dim + j];
        return acc;
      });
    }
    if (nx->requires_grad) {
      auto [dx, beta] = nx->gemm_grad_target();
      dgemm(false, true, t, in, out_dim, 1.0, g, out_dim, nw->val.data(),
            out_dim, beta, dx, in);
    }
    if (nw->requires_grad) {
      auto [dw, beta] = nw->gemm_grad_target();
      dgemm(true, false, in, out_dim, t, 1.0, nx->val.data(), in, g, out_dim,
            beta, dw, out_dim);
    }
  });
}

// ---------------------------------------------------------------------------
// Normalization

namespace {

struct NormSaved {
  AlignedBuf xhat;
  AlignedBuf inv_std;
};

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  require(x.ndim() == 2, "layer_norm", "input must be [T,D]");
  const int t = x.dim(0), d = x.dim(1);
  require(gamma.ndim() == 1 && gamma.dim(0) == d, "layer_norm",
          "gamma must be [D]");
  require(beta.ndim() == 1 && beta.dim(0) == d, "layer_norm",
          "beta must be [D]");
  Op op = make_op("layer_norm", x.shape(), {&x, &gamma, &beta});
  auto saved = std::make_shared<NormSaved>();
  saved->xhat = AlignedBuf(static_cast<std::size_t>(t) * d);
  saved->inv_std = AlignedBuf(static_cast<std::size_t>(t));
  const double* px = x.data().data();
  const double* pg = gamma.data().data();
  const double* pbeta = beta.data().data();
  double* out = op.out();
  for (int r = 0; r < t; ++r) {
    const double* row = px + static_cast<std::size_t>(r) * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += row[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = row[j] - mu;
      var += c * c;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    saved->inv_std.data()[r] = inv;
    double* hrow = saved->xhat.data() + static_cast<std::size_t>(r) * d;
    double* orow = out + static_cast<std::size_t>(r) * d;
    for (int j = 0; j < d; ++j) {
      hrow[j] = (row[j] - mu) * inv;
      orow[j] = pg[j] * hrow[j] + pbeta[j];
    }
  }
  NodePtr nx = x.node(), ng = gamma.node(), nb = beta.node();
  return seal(op, [nx, ng, nb, saved, t, d](Node& self) {
    const double* g = self.grad.data();
    const double* xhat = saved->xhat.data();
    const double* inv = saved->inv_std.data();
    const double* pg = ng->val.data();
    if (ng->requires_grad) {
      scatter_grad(*ng, d, [g, xhat, t, d](int j) {
        double acc = 0.0;
        for (int r = 0; r < t; ++r) {
          const std::size_t i = static_cast<std::size_t>(r) * d + j;
          acc += g[i] * xhat[i];
        }
        return acc;
      });
    }
    if (nb->requires_grad) {
      scatter_grad(*nb, d, [g, t, d](int j) {
        double acc = 0.0;
        for (int r = 0; r < t; ++r)
          acc += g[static_cast<std::size_t>(r) * d + j];
        return acc;
      });
    }
    if (nx->requires_grad) {
      bool fresh;
      double* dst = nx->raw_grad(fresh);
      for (int r = 0; r < t; ++r) {
        const double* grow = g + static_cast<std::size_t>(r) * d;
        const double* hrow = xhat + static_cast<std::size_t>(r) * d;
        double* drow = dst + static_cast<std::size_t>(r) * d;
        double m1 = 0.0, m2 = 0.0;
        for (int j = 0; j < d; ++j) {
          const double gg = grow[j] * pg[j];
          m1 += gg;
          m2 += gg * hrow[j];
        }
        m1 /= d;
        m2 /= d;
        for (int j = 0; j < d; ++j) {
          const double gg = grow[j] * pg[j];
          const double v = inv[r] * (gg - m1 - hrow[j] * m2);
          if (fresh) {
            drow[j] = v;
          } else {
            drow[j] += v;
          }
        }
      }
    }
  });
}

Tensor channel_layer_norm(const Tensor& x, const Tensor& gamma,
                          const Tensor& beta, double eps) {
  require_chw("channel_layer_norm", x);
  const int c = x.dim(0), hw = x.dim(1) * x.dim(2);
  require(gamma.ndim() == 1 && gamma.dim(0) == c, "channel_layer_norm",
          "gamma must be [C]");
  require(beta.ndim() == 1 && beta.dim(0) == c, "channel_layer_norm",
          "beta must be [C]");
  Op op = make_op("channel_layer_norm", x.shape(), {&x, &gamma, &beta});
  auto saved = std::make_shared<NormSaved>();
  saved->xhat = AlignedBuf(static_cast<std::size_t>(c) * hw);
  saved->inv_std = AlignedBuf(static_cast<std::size_t>(hw));
  const double* px = x.data().data();
  const double* pg = gamma.data().data();
  const double* pbeta = beta.data().data();
  double* out = op.out();
  double* xhat = saved->xhat.data();
  double* inv_std = saved->inv_std.data();
  {
    // Accumulate mean/var per spatial position with channel-major sweeps.
    std::vector<double> mu(hw, 0.0), var(hw, 0.0);
    for (int ci = 0; ci < c; ++ci) {
      const double* row = px + static_cast<std::size_t>(ci) * hw;
      for (int p = 0; p < hw; ++p) mu[p] += row[p];
    }
    const double invc = 1.0 / c;
    for (int p = 0; p < hw; ++p) mu[p] *= invc;
    for (int ci = 0; ci < c; ++ci) {
      const double* row = px + static_cast<std::size_t>(ci) * hw;
      for (int p = 0; p < hw; ++p) {
        const double d = row[p] - mu[p];
        var[p] += d * d;
      }
    }
    for (int p = 0; p < hw; ++p)
      inv_std[p] = 1.0 / std::sqrt(var[p] * invc + eps);
    for (int ci = 0; ci < c; ++ci) {
      const double* row = px + static_cast<std::size_t>(ci) * hw;
      double* hrow = xhat + static_cast<std::size_t>(ci) * hw;
      double* orow = out + static_cast<std::size_t>(ci) * hw;
      const double gc = pg[ci], bc = pbeta[ci];
      for (int p = 0; p < hw; ++p) {
        hrow[p] = (row[p] - mu[p]) * inv_std[p];
        orow[p] = gc * hrow[p] + bc;
      }
    }
  }
  NodePtr nx = x.node(), ng = gamma.node(), nb = beta.node();
  return seal(op, [nx, ng, nb, saved, c, hw](Node& self) {
    const double* g = self.grad.data();
    const double* xhat = saved->xhat.data();
    const double* inv = saved->inv_std.data();
    const double* pg = ng->val.data();
    if (ng->requires_grad) {
      scatter_grad(*ng, c, [g, xhat, hw](int ci) {
        const double* grow = g + static_cast<std::size_t>(ci) * hw;
        const double* hrow = xhat + static_cast<std::size_t>(ci) * hw;
        double acc = 0.0;
        for (int p = 0; p < hw; ++p) acc += grow[p] * hrow[p];
        return acc;
      });
    }
    if (nb->requires_grad) {
      scatter_grad(*nb, c, [g, hw](int ci) {
        const double* grow = g + static_cast<std::size_t>(ci) * hw;
        double acc = 0.0;
        for (int p = 0; p < hw; ++p) acc += grow[p];
        return acc;
      });
    }
    if (nx->requires_grad) {
      std::vector<double> m1(hw, 0.0), m2(hw, 0.0);
      for (int ci = 0; ci < c; ++ci) {
        const double* grow = g + static_cast<std::size_t>(ci) * hw;
        const double* hrow = xhat + static_cast<std::size_t>(ci) * hw;
        const double gc = pg[ci];
        for (int p = 0; p < hw; ++p) {
          const double gg = grow[p] * gc;
          m1[p] += gg;
          m2[p] += gg * hrow[p];
        }
      }
      const double invc = 1.0 / c;
      for (int p = 0; p < hw; ++p) {
        m1[p] *= invc;
        m2[p] *= invc;
      }
      bool fresh;
      double* dst = nx->raw_grad(fresh);
      for (int ci = 0; ci < c; ++ci) {
        const double* grow = g + static_cast<std::size_t>(ci) * hw;
        const double* hrow = xhat + static_cast<std::size_t>(ci) * hw;
        double* drow = dst + static_cast<std::size_t>(ci) * hw;
        const double gc = pg[ci];
        for (int p = 0; p < hw; ++p) {
          const double v = inv[p] * (grow[p] * gc - m1[p] - hrow[p] * m2[p]);
          if (fresh) {
            drow[p] = v;
          } else {
            drow[p] += v;
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Softmax / losses / reductions

Tensor softmax_lastdim(const Tensor& x) {
  require(x.ndim() >= 1, "softmax", "needs at least one axis");
  const int d = x.shape().back();
  const int t = x.numel() / d;
  Op op = make_op("softmax", x.shape(), {&x});
  const double* px = x.data().data();
  double* out = op.out();
  for (int r = 0; r < t; ++r) {
    const double* row = px + static_cast<std::size_t>(r) * d;
    double* orow = out + static_cast<std::size_t>(r) * d;
    double mx = row[0];
    for (int j = 1; j < d; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < d; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    const double invz = 1.0 / z;
    for (int j = 0; j < d; ++j) orow[j] *= invz;
  }
  NodePtr nx = x.node();
  return seal(op, [nx, t, d](Node& self) {
    const double* g = self.grad.data();
    const double* y = self.val.data();
    bool fresh;
    double* dst = nx->raw_grad(fresh);
    for (int r = 0; r < t; ++r) {
      const double* grow = g + static_cast<std::size_t>(r) * d;
      const double* yrow = y + static_cast<std::size_t>(r) * d;
      double* drow = dst + static_cast<std::size_t>(r) * d;
      double dot = 0.0;
      for (int j = 0; j < d; ++j) dot += grow[j] * yrow[j];
      for (int j = 0; j < d; ++j) {
        const double v = yrow[j] * (grow[j] - dot);
        if (fresh) {
          drow[j] = v;
        } else {
          drow[j] += v;
        }
      }
    }
  });
}

Tensor cross_entropy(const Tensor& logits, int label) {
  require(logits.ndim() == 1, "cross_entropy", "logits must be 1-D");
  const int k = logits.dim(0);
  if (label < 0 || label >= k) {
    throw LabelError("cross_entropy: label " + std::to_string(label) +
                     " outside [0," + std::to_string(k) + ")");
  }
  Op op = make_op("cross_entropy", {1}, {&logits});
  const double* pl = logits.data().data();
  auto probs = std::make_shared<std::vector<double>>(k);
  double mx = pl[0];
  for (int j = 1; j < k; ++j) mx = std::max(mx, pl[j]);
  double z = 0.0;
  for (int j = 0; j < k; ++j) {
    (*probs)[j] = std::exp(pl[j] - mx);
    z += (*probs)[j];
  }
  for (int j = 0; j < k; ++j) (*probs)[j] /= z;
  op.out()[0] = std::log(z) + mx - pl[label];
  NodePtr nl = logits.node();
  return seal(op, [nl, probs, label, k](Node& self) {
    const double g = self.grad.data()[0];
    scatter_grad(*nl, k, [&](int j) {
      return g * ((*probs)[j] - (j == label ? 1.0 : 0.0));
    });
  });
}

Tensor sum(const Tensor& x) {
  Op op = make_op("sum", {1}, {&x});
  const int n = x.numel();
  const double* px = x.data().data();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += px[i];
  op.out()[0] = acc;
  NodePtr nx = x.node();
  return seal(op, [nx, n](Node& self) {
    const double g = self.grad.data()[0];
    scatter_grad(*nx, n, [g](int) { return g; });
  });
}

Tensor global_avg_pool(const Tensor& x) {
  require_chw("global_avg_pool", x);
  const int c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Op op = make_op("global_avg_pool", {c}, {&x});
  const double* px = x.data().data();
  double* out = op.out();
  const double inv = 1.0 / hw;
  for (int ci = 0; ci < c; ++ci) {
    const double* row = px + static_cast<std::size_t>(ci) * hw;
    double acc = 0.0;
    for (int p = 0; p < hw; ++p) acc += row[p];
    out[ci] = acc * inv;
  }
  NodePtr nx = x.node();
  return seal(op, [nx, c, hw, inv](Node& self) {
    const double* g = self.grad.data();
    bool fresh;
    double* dst = nx->raw_grad(fresh);
    for (int ci = 0; ci < c; ++ci) {
      double* drow = dst + static_cast<std::size_t>(ci) * hw;
      const double v = g[ci] * inv;
      if (fresh) {
        for (int p = 0; p < hw; ++p) drow[p] = v;
      } else {
        for (int p = 0; p < hw; ++p) drow[p] += v;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Layout

Tensor reshape(const Tensor& x, Shape shape) {
  const int n = shape_numel(shape);
  if (n != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) +
                         " as " + shape_str(shape));
  }
  Op op = make_op("reshape", std::move(shape), {&x});
  std::memcpy(op.out(), x.data().data(), sizeof(double) * n);
  NodePtr nx = x.node();
  return seal(op,
              [nx, n](Node& self) { nx->add_grad(self.grad.data(), n); });
}

Tensor transpose2d(const Tensor& x) {
  require(x.ndim() == 2, "transpose2d", "expects a 2-D tensor");
  const int m = x.dim(0), n = x.dim(1);
  Op op = make_op("transpose2d", {n, m}, {&x});
  const double* px = x.data().data();
  double* out = op.out();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j) * m + i] =
          px[static_cast<std::size_t>(i) * n + j];
  NodePtr nx = x.node();
  return seal(op, [nx, m, n](Node& self) {
    const double* g = self.grad.data();
    scatter_grad(*nx, m * n, [g, m, n](int i) {
      const int r = i / n, c = i % n;
      return g[static_cast<std::size_t>(c) * m + r];
    });
  });
}

Tensor slice_cols(const Tensor& x, int col0, int width) {
  require(x.ndim() == 2, "slice_cols", "expects a 2-D tensor");
  const int t = x.dim(0), d = x.dim(1);
  if (col0 < 0 || width <= 0 || col0 + width > d) {
    throw DimensionError("slice_cols: range [" + std::to_string(col0) + "," +
                         std::to_string(col0 + width) + ") outside width " +
                         std::to_string(d));
  }
  Op op = make_op("slice_cols", {t, width}, {&x});
  const double* px = x.data().data();
  double* out = op.out();
  for (int r = 0; r < t; ++r) {
    std::memcpy(out + static_cast<std::size_t>(r) * width,
                px + static_cast<std::size_t>(r) * d + col0,
                sizeof(double) * width);
  }
  NodePtr nx = x.node();
  return seal(op, [nx, t, d, col0, width](Node& self) {
    const double* g = self.grad.data();
    double* dst = nx->zeroed_grad();
    for (int r = 0; r < t; ++r) {
      double* drow = dst + static_cast<std::size_t>(r) * d + col0;
      const double* grow = g + static_cast<std::size_t>(r) * width;
      for (int j = 0; j < width; ++j) drow[j] += grow[j];
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols", "needs at least one part");
  const int t = parts[0].dim(0);
  int total = 0;
  for (const Tensor& p : parts) {
    require(p.ndim() == 2, "concat_cols", "parts must be 2-D");
    require(p.dim(0) == t, "concat_cols", "parts must share the row count");
    total += p.dim(1);
  }
  std::vector<const Tensor*> ptrs;
  Op op;
  {
    // make_op takes an initializer_list; build the parent list by hand.
    op.name = "concat_cols";
    op.node = std::make_shared<Node>();
    op.node->shape = {t, total};
    op.node->val =
        AlignedBuf(static_cast<std::size_t>(shape_numel(op.node->shape)));
    bool any = false;
    for (const Tensor& p : parts)
      if (p.requires_grad()) any = true;
    op.track = any && grad_enabled();
    if (op.track) {
      op.node->requires_grad = true;
      op.node->is_leaf = false;
      for (const Tensor& p : parts) op.node->parents.push_back(p.node());
    }
  }
  double* out = op.out();
  int off = 0;
  std::vector<int> widths;
  for (const Tensor& p : parts) {
    const int w = p.dim(1);
    const double* src = p.data().data();
    for (int r = 0; r < t; ++r) {
      std::memcpy(out + static_cast<std::size_t>(r) * total + off,
                  src + static_cast<std::size_t>(r) * w, sizeof(double) * w);
    }
    widths.push_back(w);
    off += w;
  }
  std::vector<NodePtr> nodes;
  for (const Tensor& p : parts) nodes.push_back(p.node());
  return seal(op, [nodes, widths, t, total](Node& self) {
    const double* g = self.grad.data();
    int off = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const int w = widths[i];
      if (nodes[i]->requires_grad) {
        bool fresh;
        double* dst = nodes[i]->raw_grad(fresh);
        for (int r = 0; r < t; ++r) {
          const double* grow = g + static_cast<std::size_t>(r) * total + off;
          double* drow = dst + static_cast<std::size_t>(r) * w;
          if (fresh) {
            std::memcpy(drow, grow, sizeof(double) * w);
          } else {
            for (int j = 0; j < w; ++j) drow[j] += grow[j];
          }
        }
      }
      off += w;
    }
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_chw("concat_channels", a);
  require_chw("concat_channels", b);
  require(a.dim(1) == b.dim(1) && a.dim(2) == b.dim(2), "concat_channels",
          "spatial sizes differ: " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
  const int ca = a.dim(0), cb = b.dim(0), hw = a.dim(1) * a.dim(2);
  Op op = make_op("concat_channels", {ca + cb, a.dim(1), a.dim(2)}, {&a, &b});
  double* out = op.out();
  std::memcpy(out, a.data().data(), sizeof(double) * ca * hw);
  std::memcpy(out + static_cast<std::size_t>(ca) * hw, b.data().data(),
              sizeof(double) * cb * hw);
  NodePtr na = a.node(), nb = b.node();
  return seal(op, [na, nb, ca, cb, hw](Node& self) {
    const double* g = self.grad.data();
    if (na->requires_grad)
      na->add_grad(g, static_cast<std::size_t>(ca) * hw);
    if (nb->requires_grad)
      nb->add_grad(g + static_cast<std::size_t>(ca) * hw,
                   static_cast<std::size_t>(cb) * hw);
  });
}

Tensor patchify(const Tensor& x) {
  if (!(x.ndim() == 3 && x.dim(0) == 3 && x.dim(1) == 14 && x.dim(2) == 14)) {
    throw DimensionError("patchify: expected [3,14,14], got " +
                         shape_str(x.shape()));
  }
  const int c = 3, hw = 196;
  Op op = make_op("patchify", {hw, c}, {&x});
  const double* px = x.data().data();
  double* out = op.out();
  for (int t = 0; t < hw; ++t)
    for (int ci = 0; ci < c; ++ci)
      out[static_cast<std::size_t>(t) * c + ci] =
          px[static_cast<std::size_t>(ci) * hw + t];
  NodePtr nx = x.node();
  return seal(op, [nx, c, hw](Node& self) {
    const double* g = self.grad.data();
    scatter_grad(*nx, c * hw, [g, c, hw](int i) {
      const int ci = i / hw, t = i % hw;
      return g[static_cast<std::size_t>(t) * c + ci];
    });
  });
}

Tensor tokens_to_chw(const Tensor& x, int h, int w) {
  require(x.ndim() == 2, "tokens_to_chw", "expects [T,D] tokens");
  const int t = x.dim(0), d = x.dim(1);
  if (t != h * w) {
    throw DimensionError("tokens_to_chw: " + std::to_string(t) +
                         " tokens cannot fill " + std::to_string(h) + "x" +
                         std::to_string(w));
  }
  Op op = make_op("tokens_to_chw", {d, h, w}, {&x});
  const double* px = x.data().data();
  double* out = op.out();
  for (int ti = 0; ti < t; ++ti)
    for (int di = 0; di < d; ++di)
      out[static_cast<std::size_t>(di) * t + ti] =
          px[static_cast<std::size_t>(ti) * d + di];
  NodePtr nx = x.node();
  return seal(op, [nx, t, d](Node& self) {
    const double* g = self.grad.data();
    scatter_grad(*nx, t * d, [g, t, d](int i) {
      const int ti = i / d, di = i % d;
      return g[static_cast<std::size_t>(di) * t + ti];
    });
  });
}

}  // namespace mmnet
