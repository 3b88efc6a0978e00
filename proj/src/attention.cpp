#include "stsg/attention.hpp"

#include <cmath>
#include <stdexcept>

#include "stsg/ops.hpp"

namespace stsg {

namespace {

constexpr std::size_t kMaxAttnTokens = 256;  // 16 x 16
constexpr std::size_t kPooledSide = 16;

void check_token_input(const char* op, const Tensor& t, std::size_t dim, std::size_t heads) {
    if (t.rank() != 3 || t.shape()[2] != dim) {
        throw std::invalid_argument(std::string(op) + ": expected (N,T," + std::to_string(dim) +
                                    "), got " + shape_str(t.shape()));
    }
    if (dim % heads != 0) {
        throw std::invalid_argument(std::string(op) + ": dim " + std::to_string(dim) +
                                    " not divisible by " + std::to_string(heads) + " heads");
    }
}

// (N,T,D) -> (N,h,T,D/h)
Tensor split_heads(const Tensor& x, std::size_t heads) {
    const std::size_t n = x.shape()[0], t = x.shape()[1], d = x.shape()[2];
    return permute(reshape(x, {n, t, heads, d / heads}), {0, 2, 1, 3});
}

}  // namespace

MhcaParams MhcaParams::create(ParamStore& store, const std::string& prefix, std::size_t dim,
                              std::size_t heads) {
    MhcaParams p;
    p.heads = heads;
    p.dim = dim;
    p.wq = store.create(prefix + ".wq", {dim, dim}, Init::XavierUniform);
    p.bq = store.create(prefix + ".bq", {dim}, Init::Zeros);
    p.wk = store.create(prefix + ".wk", {dim, dim}, Init::XavierUniform);
    p.bk = store.create(prefix + ".bk", {dim}, Init::Zeros);
    p.wv = store.create(prefix + ".wv", {dim, dim}, Init::XavierUniform);
    p.bv = store.create(prefix + ".bv", {dim}, Init::Zeros);
    p.wo = store.create(prefix + ".wo", {dim, dim}, Init::XavierUniform);
    p.bo = store.create(prefix + ".bo", {dim}, Init::Zeros);
    return p;
}

void MhcaParams::set_identity() {
    for (Tensor* w : {&wq, &wk, &wv, &wo}) {
        auto& d = w->mutable_data();
        std::fill(d.begin(), d.end(), 0.0);
        for (std::size_t i = 0; i < dim; ++i) d[i * dim + i] = 1.0;
    }
    for (Tensor* b : {&bq, &bk, &bv, &bo}) {
        auto& d = b->mutable_data();
        std::fill(d.begin(), d.end(), 0.0);
    }
}

void MhcaParams::zero_output_projection() {
    std::fill(wo.mutable_data().begin(), wo.mutable_data().end(), 0.0);
    std::fill(bo.mutable_data().begin(), bo.mutable_data().end(), 0.0);
}

void MhcaParams::zero_value_projection() {
    std::fill(wv.mutable_data().begin(), wv.mutable_data().end(), 0.0);
    std::fill(bv.mutable_data().begin(), bv.mutable_data().end(), 0.0);
}

Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
    const std::size_t d = q.shape()[2];
    check_token_input("attention", q, d, heads);
    check_token_input("attention", k, d, heads);
    check_token_input("attention", v, d, heads);
    const std::size_t n = q.shape()[0], tq = q.shape()[1];
    const std::size_t dh = d / heads;

    Tensor qh = split_heads(q, heads);
    Tensor kh = split_heads(k, heads);
    Tensor vh = split_heads(v, heads);
    Tensor scores = mul_scalar(matmul(qh, permute(kh, {0, 1, 3, 2})), 1.0 / std::sqrt(double(dh)));
    Tensor weights = softmax(scores, 3);
    Tensor ctx = matmul(weights, vh);  // (N,h,Tq,dh)
    return reshape(permute(ctx, {0, 2, 1, 3}), {n, tq, d});
}

Tensor attention_core_weights(const Tensor& q, const Tensor& k, std::size_t heads) {
    autograd::NoGradGuard ng;
    const std::size_t d = q.shape()[2];
    const std::size_t dh = d / heads;
    Tensor qh = split_heads(q, heads);
    Tensor kh = split_heads(k, heads);
    Tensor scores = mul_scalar(matmul(qh, permute(kh, {0, 1, 3, 2})), 1.0 / std::sqrt(double(dh)));
    return softmax(scores, 3);
}

Tensor mhca(const Tensor& f_l, const Tensor& f_r, const MhcaParams& p) {
    check_token_input("mhca", f_l, p.dim, p.heads);
    check_token_input("mhca", f_r, p.dim, p.heads);
    Tensor q = linear(f_l, p.wq, p.bq);
    Tensor k = linear(f_r, p.wk, p.bk);
    Tensor v = linear(f_r, p.wv, p.bv);
    return linear(attention_core(q, k, v, p.heads), p.wo, p.bo);
}

Tensor mhca_attention_weights(const Tensor& f_l, const Tensor& f_r, const MhcaParams& p) {
    autograd::NoGradGuard ng;
    return attention_core_weights(linear(f_l, p.wq, p.bq), linear(f_r, p.wk, p.bk), p.heads);
}

Tensor flatten_map(const Tensor& x) {
    if (x.rank() != 4) throw std::invalid_argument("flatten_map: expected (N,C,H,W)");
    const std::size_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    return reshape(permute(x, {0, 2, 3, 1}), {n, h * w, c});
}

Tensor unflatten_map(const Tensor& t, std::size_t h, std::size_t w) {
    if (t.rank() != 3) throw std::invalid_argument("unflatten_map: expected (N,T,C)");
    if (t.shape()[1] != h * w) {
        throw std::invalid_argument("unflatten_map: " + std::to_string(t.shape()[1]) +
                                    " tokens cannot fill " + std::to_string(h) + "x" +
                                    std::to_string(w));
    }
    const std::size_t n = t.shape()[0], c = t.shape()[2];
    return permute(reshape(t, {n, h, w, c}), {0, 3, 1, 2});
}

Tensor cross_attend_maps(const Tensor& q_map, const Tensor& kv_map, const MhcaParams& p) {
    if (q_map.shape() != kv_map.shape()) {
        throw std::invalid_argument("cross_attend_maps: shapes differ, " + shape_str(q_map.shape()) +
                                    " vs " + shape_str(kv_map.shape()));
    }
    const std::size_t h = q_map.shape()[2], w = q_map.shape()[3];
    if (h * w <= kMaxAttnTokens) {
        return unflatten_map(mhca(flatten_map(q_map), flatten_map(kv_map), p), h, w);
    }
    const std::size_t factor = h / kPooledSide;
    Tensor q = avg_pool2d(q_map, factor);
    Tensor kv = avg_pool2d(kv_map, factor);
    Tensor a = unflatten_map(mhca(flatten_map(q), flatten_map(kv), p), kPooledSide, kPooledSide);
    return resize_bilinear(a, h, w);
}

BidirectionalFusion BidirectionalFusion::create(ParamStore& store, const std::string& prefix,
                                                std::size_t channels, std::size_t heads) {
    BidirectionalFusion f;
    f.attn_cnn_ffc = MhcaParams::create(store, prefix + ".attn_cnn_ffc", channels, heads);
    f.attn_ffc_former = MhcaParams::create(store, prefix + ".attn_ffc_former", channels, heads);
    f.proj_w = store.create(prefix + ".proj.w", {channels, 3 * channels, 1, 1}, Init::XavierUniform);
    f.proj_b = store.create(prefix + ".proj.b", {channels}, Init::Zeros);
    f.norm_gamma = store.create(prefix + ".norm.gamma", {channels}, Init::Ones);
    f.norm_beta = store.create(prefix + ".norm.beta", {channels}, Init::Zeros);
    return f;
}

Tensor BidirectionalFusion::attention_term(const FeatureTriple& t) const {
    if (t.f_cnn.shape() != t.f_ffc.shape() || t.f_cnn.shape() != t.f_former.shape()) {
        throw std::invalid_argument("bidirectional_fusion: stream shapes differ: " +
                                    shape_str(t.f_cnn.shape()) + " / " + shape_str(t.f_ffc.shape()) +
                                    " / " + shape_str(t.f_former.shape()));
    }
    const std::size_t h = t.f_cnn.shape()[2], w = t.f_cnn.shape()[3];
    Tensor c = t.f_cnn, f = t.f_ffc, m = t.f_former;
    const bool pooled = h * w > kMaxAttnTokens;
    std::size_t ah = h, aw = w;
    if (pooled) {
        const std::size_t factor = h / kPooledSide;
        c = avg_pool2d(c, factor);
        f = avg_pool2d(f, factor);
        m = avg_pool2d(m, factor);
        ah = aw = kPooledSide;
    }
    Tensor attn = add(mhca(flatten_map(c), flatten_map(f), attn_cnn_ffc),
                      mhca(flatten_map(f), flatten_map(m), attn_ffc_former));
    Tensor map = unflatten_map(attn, ah, aw);
    return pooled ? resize_bilinear(map, h, w) : map;
}

Tensor BidirectionalFusion::forward(const FeatureTriple& t) const {
    Tensor merged = conv2d(concat({t.f_cnn, t.f_ffc, t.f_former}, 1), proj_w, proj_b, 1, 0);
    return instance_norm(add(merged, attention_term(t)), norm_gamma, norm_beta);
}

}  // namespace stsg
