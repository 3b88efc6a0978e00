#pragma once

#include <optional>
#include <string>
#include <utility>

#include "stsg/attention.hpp"
#include "stsg/fft.hpp"
#include "stsg/optim.hpp"
#include "stsg/tensor.hpp"

namespace stsg {

struct ConvLayer {
    Tensor w, b;
    std::size_t stride = 1;
    std::size_t padding = 1;

    static ConvLayer create(ParamStore& store, const std::string& prefix, std::size_t cin,
                            std::size_t cout, std::size_t k, std::size_t stride);
    Tensor forward(const Tensor& x) const;
};

struct NormLayer {
    Tensor gamma, beta;

    static NormLayer create(ParamStore& store, const std::string& prefix, std::size_t channels);
    Tensor forward(const Tensor& x) const;
};

// Spatial encoder block: conv-norm-ReLU-conv-norm, residual 1x1 projection,
// ReLU. The second conv carries the stride when downsampling.
struct CnnBlock {
    ConvLayer conv1, conv2;
    NormLayer norm1, norm2;
    Tensor proj_w, proj_b;
    bool has_proj = false;

    static CnnBlock create(ParamStore& store, const std::string& prefix, std::size_t cin,
                           std::size_t cout, bool downsample);
    Tensor forward(const Tensor& x) const;
};

// Activation with input-dependent piecewise-linear coefficients. The
// hyperfunction (GAP -> C/4 -> 4C, last layer zero-init) predicts per-channel
// offsets around (a1,a2,b1,b2) = (1,0,0,0), so a fresh unit is exactly ReLU.
// Ties in the max route the gradient to the first branch.
struct DynRelu {
    Tensor w1, b1, w2, b2;
    std::size_t channels = 0;

    static DynRelu create(ParamStore& store, const std::string& prefix, std::size_t channels);
    Tensor forward(const Tensor& x) const;
};

// The CNN-former's convolutional sub-block: two 3x3 convs with instance norm
// and Dynamic ReLU activations.
struct DynConvBlock {
    ConvLayer conv1, conv2;
    NormLayer norm1, norm2;
    DynRelu act1, act2;

    static DynConvBlock create(ParamStore& store, const std::string& prefix, std::size_t cin,
                               std::size_t cout, bool downsample);
    Tensor forward(const Tensor& x) const;
};

// Spectral encoder block. Channels split by the global ratio alpha; the
// local path is a 3x3 conv, the global path a Fourier Unit, with 1x1 cross
// paths between them. Degenerate splits (all-local / all-global) collapse to
// the surviving path.
struct FfcBlock {
    std::size_t c_local = 0, c_global = 0;
    ConvLayer conv_local;
    Tensor cross_gl_w, cross_gl_b;
    Tensor cross_lg_w, cross_lg_b;
    FourierUnit fu;
    NormLayer norm_mid;
    ConvLayer conv_out;
    NormLayer norm_out;

    static FfcBlock create(ParamStore& store, const std::string& prefix, std::size_t cin,
                           std::size_t cout, double alpha, bool downsample);
    Tensor forward(const Tensor& x) const;
};

// Token refiner: pre-norm multi-head self-attention and a 2x-expansion
// feed-forward, both residual.
struct FormerSubBlock {
    Tensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
    MhcaParams self_attn;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;

    static FormerSubBlock create(ParamStore& store, const std::string& prefix, std::size_t dim,
                                 std::size_t heads);
    Tensor forward(const Tensor& tokens) const;
};

// Lightweight bridge, feature map -> tokens: queries are projected tokens,
// keys/values are raw feature positions (no projections, no bias). The
// attention result adds onto the tokens.
struct BridgeCnnToFormer {
    Tensor wq;
    std::size_t heads = 2;

    static BridgeCnnToFormer create(ParamStore& store, const std::string& prefix, std::size_t dim,
                                    std::size_t heads);
    Tensor forward(const Tensor& features, const Tensor& tokens) const;
};

// Lightweight bridge, tokens -> feature map: raw feature positions query
// projected tokens (no query projection, no bias); result adds onto the map.
struct BridgeFormerToCnn {
    Tensor wk, wv;
    std::size_t heads = 2;

    static BridgeFormerToCnn create(ParamStore& store, const std::string& prefix, std::size_t dim,
                                    std::size_t heads);
    Tensor forward(const Tensor& tokens, const Tensor& features) const;
};

// One CNN-former encoder block: CNN->Former bridge, Former sub-block,
// Former->CNN bridge, then the conv sub-block (which downsamples). Token
// width follows the block's input channel count; a linear projection adapts
// tokens when it changes between blocks. Without bridges (ablation) the
// block is the conv sub-block alone.
struct CnnFormerBlock {
    std::optional<std::pair<Tensor, Tensor>> token_proj;  // (w, b)
    std::optional<BridgeCnnToFormer> bridge_in;
    std::optional<FormerSubBlock> former;
    std::optional<BridgeFormerToCnn> bridge_out;
    DynConvBlock conv_sub;

    static CnnFormerBlock create(ParamStore& store, const std::string& prefix, std::size_t cin,
                                 std::size_t cout, std::size_t token_dim_in, std::size_t heads,
                                 bool downsample, bool with_bridges);
    // Returns (features, tokens).
    std::pair<Tensor, Tensor> forward(const Tensor& x, const Tensor& tokens) const;
};

}  // namespace stsg
