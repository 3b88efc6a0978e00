#pragma once

#include <vector>

#include "stsg/tensor.hpp"

namespace stsg {

// Elementwise ops use trailing-dimension broadcast (numpy rules: align last
// dims, extents must match or be 1).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);  // ties route the gradient to `a`
Tensor neg(const Tensor& x);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);

Tensor sum(const Tensor& x);  // all elements -> scalar (shape {1})
Tensor sum(const Tensor& x, std::vector<std::size_t> axes, bool keepdim);
Tensor mean(const Tensor& x, std::vector<std::size_t> axes, bool keepdim);

Tensor reshape(const Tensor& x, Shape new_shape);
Tensor permute(const Tensor& x, std::vector<std::size_t> perm);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor broadcast_to(const Tensor& x, Shape target);

// Batched matrix product: a (...,M,K) x b (...,K,N) -> (...,M,N), leading
// dims broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);
// x (...,Din) * w (Din,Dout) + b (Dout). Pass an undefined bias to skip it.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Cross-correlation (no kernel flip), zero padding.
// x (N,Cin,H,W), w (Cout,Cin,kH,kW) -> (N,Cout,H',W') with
// H' = (H + 2*pad - kH)/stride + 1. Pass an undefined bias to skip it.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding);

Tensor avg_pool2d(const Tensor& x, std::size_t k);    // kernel == stride == k
Tensor global_avg_pool(const Tensor& x);              // (N,C,H,W) -> (N,C)
Tensor upsample_nearest2x(const Tensor& x);
Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);

Tensor softmax(const Tensor& x, std::size_t axis);
// Per-sample, per-channel normalization over the spatial dims of (N,C,H,W).
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
// Normalization over the last axis; gamma/beta have that axis's extent.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

}  // namespace stsg
