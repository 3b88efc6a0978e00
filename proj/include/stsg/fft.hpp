#pragma once

#include "stsg/tensor.hpp"

namespace stsg {

// Half-spectrum of a real image batch: bins for width indices 0..W/2 only,
// since the remaining columns are conjugate mirrors.
struct SpectrumTensor {
    Tensor real;  // (N, C, H, Wf) with Wf = W/2 + 1
    Tensor imag;  // same shape
    std::size_t orig_w = 0;
};

// Unnormalized forward DFT over the last two axes. H and W must be powers of
// two (radix-2 kernels). Differentiable through both outputs.
SpectrumTensor rfft2(const Tensor& x);

// Inverse transform, normalized by 1/(H*W) so irfft2(rfft2(x)) == x.
Tensor irfft2(const SpectrumTensor& s);

// FFT -> pointwise channel mixing -> inverse FFT. Real and imaginary parts
// are stacked as 2C channels for a 1x1 conv followed by per-channel
// normalization and ReLU. The hooks bypass norm/activation so tests can pin
// the pure identity composition.
struct FourierUnit {
    Tensor conv_w;      // (2C, 2C, 1, 1)
    Tensor conv_b;      // (2C)
    Tensor norm_gamma;  // (2C)
    Tensor norm_beta;   // (2C)
    bool use_norm = true;
    bool use_act = true;

    Tensor forward(const Tensor& x) const;
};

}  // namespace stsg
