#pragma once

#include <string>

#include "stsg/optim.hpp"
#include "stsg/tensor.hpp"

namespace stsg {

// Multi-head cross-attention projections. All four projections square (D x D)
// with biases; head dim is D/heads.
struct MhcaParams {
    std::size_t heads = 2;
    std::size_t dim = 0;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;

    static MhcaParams create(ParamStore& store, const std::string& prefix, std::size_t dim,
                             std::size_t heads);

    // Test hooks.
    void set_identity();
    void zero_output_projection();
    void zero_value_projection();
};

// Shared attention core without projections: softmax(Q K^T / sqrt(D/h)) V per
// head, heads re-concatenated. q is (N,Tq,D), k/v are (N,Tk,D).
Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads);

// Row-stochastic weights (N,heads,Tq,Tk) of the core; detached, for tests.
Tensor attention_core_weights(const Tensor& q, const Tensor& k, std::size_t heads);

// Queries from f_l, keys/values from f_r.
Tensor mhca(const Tensor& f_l, const Tensor& f_r, const MhcaParams& p);
Tensor mhca_attention_weights(const Tensor& f_l, const Tensor& f_r, const MhcaParams& p);

// Bijective map between (N,C,H,W) feature maps and (N,H*W,C) token
// sequences; position (n,c,i,j) lands at token i*W+j, channel c.
Tensor flatten_map(const Tensor& x);
Tensor unflatten_map(const Tensor& t, std::size_t h, std::size_t w);

// Attention between two same-size feature maps under the token budget: maps
// finer than 16x16 are average-pooled to 16x16 for the attention and the
// result is restored bilinearly. Returns the attention term only; residual
// wiring is the caller's.
Tensor cross_attend_maps(const Tensor& q_map, const Tensor& kv_map, const MhcaParams& p);

// The three same-shape encoder outputs at one level.
struct FeatureTriple {
    Tensor f_cnn, f_ffc, f_former;
};

// Combines the triple: Attn = mhca(f_cnn -> f_ffc) + mhca(f_ffc -> f_former),
// added onto a 1x1 projection of the channel-concatenated triple, normalized.
struct BidirectionalFusion {
    MhcaParams attn_cnn_ffc;
    MhcaParams attn_ffc_former;
    Tensor proj_w, proj_b;  // (C, 3C, 1, 1), (C)
    Tensor norm_gamma, norm_beta;

    static BidirectionalFusion create(ParamStore& store, const std::string& prefix,
                                      std::size_t channels, std::size_t heads);

    Tensor attention_term(const FeatureTriple& t) const;
    Tensor forward(const FeatureTriple& t) const;
};

}  // namespace stsg
