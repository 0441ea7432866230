#pragma once

#include <vector>

#include "mmnet/tensor.hpp"

namespace mmnet {

// Elementwise (shapes must match exactly).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// Activations.
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form

// Each channel of x scaled by the single-channel spatial map.
Tensor broadcast_mul(const Tensor& x /*[C,H,W]*/, const Tensor& map /*[1,H,W]*/);

// Channel-axis reductions of a CHW tensor to 1HW. Max routes its gradient
// to the lowest-index winning channel.
Tensor channel_max(const Tensor& x);
Tensor channel_avg(const Tensor& x);

// 2x2 stride-2 spatial max pooling; ties go to the first element of the
// window in row-major order. H and W must be even.
Tensor spatial_maxpool2(const Tensor& x);

// kxk non-overlapping box average; H and W must be multiples of k.
Tensor spatial_avgpool(const Tensor& x, int k);

// Direct 2D cross-correlation, kernels of size 1 or 3.
Tensor conv2d(const Tensor& x /*[Cin,H,W]*/, const Tensor& w /*[Cout,Cin,k,k]*/,
              const Tensor& b /*[Cout]*/, int stride, int padding);

// Dense algebra.
Tensor matmul(const Tensor& a /*[M,K]*/, const Tensor& b /*[K,N]*/);
Tensor linear(const Tensor& x /*[T,in]*/, const Tensor& w /*[in,out]*/,
              const Tensor& b /*[out]*/);

// Normalization over the last axis of a [T,D] tensor.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
// Normalization across channels at every spatial position of a CHW tensor.
Tensor channel_layer_norm(const Tensor& x, const Tensor& gamma,
                          const Tensor& beta, double eps = 1e-5);

// Softmax along the last axis (numerically stabilized).
Tensor softmax_lastdim(const Tensor& x);

// Layout ops.
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose2d(const Tensor& x);
Tensor slice_cols(const Tensor& x /*[T,D]*/, int col0, int width);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_channels(const Tensor& a /*[Ca,H,W]*/, const Tensor& b /*[Cb,H,W]*/);

// [C,H,W] -> per-pixel token rows [H*W, C]; token t = row*W + col.
Tensor patchify(const Tensor& x);
// Inverse layout of patchify outputs: [T,D] -> [D,h,w] with T == h*w.
Tensor tokens_to_chw(const Tensor& x, int h, int w);

// Reductions.
Tensor sum(const Tensor& x);                 // -> scalar
Tensor global_avg_pool(const Tensor& x);     // [C,H,W] -> [C]

// Negative log-likelihood of `label` under softmax(logits). Stable log-sum-exp.
Tensor cross_entropy(const Tensor& logits /*[K]*/, int label);

}  // namespace mmnet
