#include <stdexcept>

#include "kernels.hpp"
#include "stsg/ops.hpp"

namespace stsg {

namespace {

struct BatchLayout {
    Shape batch;                        // broadcast batch shape
    std::vector<std::size_t> stride_a;  // per batch dim, in units of whole matrices
    std::vector<std::size_t> stride_b;
};

BatchLayout batch_layout(const Shape& a, const Shape& b) {
    Shape ab(a.begin(), a.end() - 2), bb(b.begin(), b.end() - 2);
    BatchLayout lay;
    lay.batch = detail::broadcast_shape("matmul", ab, bb);
    lay.stride_a = detail::broadcast_strides(ab, lay.batch);
    lay.stride_b = detail::broadcast_strides(bb, lay.batch);
    return lay;
}

template <class F>
void for_each_batch(const BatchLayout& lay, F&& f) {
    const std::size_t n = shape_numel(lay.batch);
    if (lay.batch.empty()) {
        f(std::size_t{0}, std::size_t{0}, std::size_t{0});
        return;
    }
    detail::for_each_broadcast(lay.batch, lay.stride_a, lay.stride_b, std::forward<F>(f));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw std::invalid_argument("matmul: operands must have rank >= 2, got " +
                                    shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::size_t m = a.shape()[a.rank() - 2];
    const std::size_t k = a.shape()[a.rank() - 1];
    const std::size_t k2 = b.shape()[b.rank() - 2];
    const std::size_t n = b.shape()[b.rank() - 1];
    if (k != k2) {
        throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }

    const BatchLayout lay = batch_layout(a.shape(), b.shape());
    Shape out_shape = lay.batch;
    out_shape.push_back(m);
    out_shape.push_back(n);

    Tensor out(out_shape, 0.0);
    out.impl()->dtype = detail::combine_dtype({&a, &b});
    auto& od = out.impl()->data;
    const auto& ad = a.data();
    const auto& bd = b.data();
    for_each_batch(lay, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        detail::gemm_nn(m, k, n, ad.data() + ia * m * k, bd.data() + ib * k * n, od.data() + i * m * n,
                        false);
    });
    detail::apply_dtype(out);

    if (autograd::needs_graph({&a, &b})) {
        autograd::attach(out, "matmul", {a, b}, [lay, m, k, n](TensorImpl& self) {
            TensorImpl& ai = *self.node->inputs[0];
            TensorImpl& bi = *self.node->inputs[1];
            const bool need_a = ai.requires_grad;
            const bool need_b = bi.requires_grad;
            if (need_a && ai.grad.empty()) ai.grad.assign(ai.data.size(), 0.0);
            if (need_b && bi.grad.empty()) bi.grad.assign(bi.data.size(), 0.0);
            // Per batch element: dA += dC * B^T, dB += A^T * dC. Accumulating
            // through the broadcast map applies the reduction over broadcast
            // batch dims.
            std::vector<double> tmp_a(need_a ? m * k : 0);
            std::vector<double> tmp_b(need_b ? k * n : 0);
            for_each_batch(lay, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                const double* g = self.grad.data() + i * m * n;
                if (need_a) {
                    detail::gemm_nt(m, n, k, g, bi.data.data() + ib * k * n, tmp_a.data(), false);
                    double* dst = ai.grad.data() + ia * m * k;
                    for (std::size_t t = 0; t < m * k; ++t) dst[t] += tmp_a[t];
                }
                if (need_b) {
                    detail::gemm_tn(k, m, n, ai.data.data() + ia * m * k, g, tmp_b.data(), false);
                    double* dst = bi.grad.data() + ib * k * n;
                    for (std::size_t t = 0; t < k * n; ++t) dst[t] += tmp_b[t];
                }
            });
        });
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    Tensor y = matmul(x, w);
    if (b.defined()) y = add(y, b);
    return y;
}

}  // namespace stsg
