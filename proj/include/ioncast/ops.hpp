#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ioncast/autograd.hpp"

// Differentiable primitives. Every op records itself on the graph of its first
// operand. Index arrays passed as spans must outlive the graph's backward pass.
namespace ioncast::ops {

template <typename T> Var<T> matmul(Var<T> a, Var<T> b);
template <typename T> Var<T> transpose(Var<T> a);
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T s);
// a[m x n] + b[n] broadcast over rows.
template <typename T> Var<T> add_row(Var<T> a, Var<T> b);
// a[C x H x W] + b[C] broadcast over the spatial axes.
template <typename T> Var<T> add_channel(Var<T> a, Var<T> b);

template <typename T> Var<T> swish(Var<T> a);
template <typename T> Var<T> sigmoid(Var<T> a);
template <typename T> Var<T> tanh(Var<T> a);

// Normalizes over the last axis; eps = 1e-5 inside the square root.
template <typename T> Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias);

// Axis 0 concatenation for any rank; axis 1 for rank-2 operands.
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
template <typename T> Var<T> slice_cols(Var<T> a, std::size_t begin, std::size_t end);
// Spatial window [h0, h0 + h) x [w0, w0 + w) of a [C x H x W] tensor.
template <typename T> Var<T> crop(Var<T> a, std::size_t h0, std::size_t h, std::size_t w0, std::size_t w);
template <typename T> Var<T> reshape(Var<T> a, Shape shape);

template <typename T> Var<T> gather_rows(Var<T> x, std::span<const std::int32_t> index);
// Row r of the result sums the rows of `values` whose receiver is r, in
// ascending edge order.
template <typename T> Var<T> scatter_sum(Var<T> values, std::span<const std::int32_t> receiver, std::size_t n);

// Strided convolution over [C x H x W]; wraps along W (longitude), zero pads
// along H (latitude). Kernel [O x C x kh x kw] with odd extents; the leading
// pad is (k - 1) / 2 on each axis. Output is ceil(H/s) x ceil(W/s).
template <typename T> Var<T> conv2d_circular(Var<T> input, Var<T> kernel, std::size_t stride);
// Adjoint of the strided convolution with the same kernel and stride, mapping
// [O x ceil(H/s) x ceil(W/s)] back to [C x H x W]. Even kernels are allowed.
template <typename T>
Var<T> conv2d_transposed(Var<T> input, Var<T> kernel, std::size_t stride, std::size_t out_h, std::size_t out_w);
// Bilinear resize by an integer factor, cell-center convention, edge clamped.
template <typename T> Var<T> upsample_bilinear(Var<T> input, std::size_t factor);
// [C x H x W] -> [1 x C]
template <typename T> Var<T> global_avg_pool(Var<T> input);

// Inverted dropout on hidden activations; identity outside training mode.
template <typename T> Var<T> dropout(Var<T> a, double rate);

// Gate layout along the 4k axis: input, forget, output, candidate.
template <typename T> struct LstmWeights {
  Var<T> w_x;   // [d x 4k]
  Var<T> w_h;   // [k x 4k]
  Var<T> bias;  // [4k]
};
// x [B x d], h/c [B x k] -> (h', c')
template <typename T>
std::pair<Var<T>, Var<T>> lstm_cell(Var<T> x, Var<T> h, Var<T> c, const LstmWeights<T>& w);

template <typename T> Var<T> sum(Var<T> a);
template <typename T> Var<T> mean(Var<T> a);
// sum_c w_c * mean((pred_c - truth_c)^2) / sum_c w_c over the leading axis.
template <typename T> Var<T> weighted_mse(Var<T> pred, Var<T> truth, const std::vector<double>& weights);

// Plain tensor kernels shared by the ops and their tests.
namespace kernels {
template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& k, std::size_t stride);
template <typename T>
Tensor<T> conv_adjoint(const Tensor<T>& y, const Tensor<T>& k, std::size_t stride, std::size_t out_h,
                       std::size_t out_w);
// d<conv(x,k), g>/dk
template <typename T>
Tensor<T> conv_kernel_grad(const Tensor<T>& x, const Tensor<T>& g, const Shape& kshape, std::size_t stride);
}  // namespace kernels

}  // namespace ioncast::ops
