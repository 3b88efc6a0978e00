#include <cmath>
#include <stdexcept>

#include "kernels.hpp"
#include "stsg/ops.hpp"
#include "stsg/parallel.hpp"

namespace stsg {

namespace {

void im2col(const double* x, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo,
            double* col) {
    // col is (cin*kh*kw) x (ho*wo)
    parallel_for(static_cast<std::ptrdiff_t>(cin * kh * kw), [&](std::size_t r) {
        const std::size_t c = r / (kh * kw);
        const std::size_t ki = (r / kw) % kh;
        const std::size_t kj = r % kw;
        const double* plane = x + c * h * w;
        double* dst = col + r * ho * wo;
        for (std::size_t oi = 0; oi < ho; ++oi) {
            const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * stride + ki) -
                                      static_cast<std::ptrdiff_t>(pad);
            for (std::size_t oj = 0; oj < wo; ++oj) {
                const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * stride + kj) -
                                          static_cast<std::ptrdiff_t>(pad);
                const bool inside = ii >= 0 && ii < static_cast<std::ptrdiff_t>(h) && jj >= 0 &&
                                    jj < static_cast<std::ptrdiff_t>(w);
                dst[oi * wo + oj] = inside ? plane[ii * w + jj] : 0.0;
            }
        }
    });
}

void col2im_add(const double* col, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh,
                std::size_t kw, std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo,
                double* x) {
    // Parallel over input channels: each channel's scatter is independent.
    parallel_for(static_cast<std::ptrdiff_t>(cin), [&](std::size_t c) {
        double* plane = x + c * h * w;
        for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj) {
                const double* src = col + ((c * kh + ki) * kw + kj) * ho * wo;
                for (std::size_t oi = 0; oi < ho; ++oi) {
                    const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * stride + ki) -
                                              static_cast<std::ptrdiff_t>(pad);
                    if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t oj = 0; oj < wo; ++oj) {
                        const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * stride + kj) -
                                                  static_cast<std::ptrdiff_t>(pad);
                        if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(w)) continue;
                        plane[ii * w + jj] += src[oi * wo + oj];
                    }
                }
            }
        }
    });
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
    if (x.rank() != 4 || w.rank() != 4) {
        throw std::invalid_argument("conv2d: expected x (N,Cin,H,W) and w (Cout,Cin,kH,kW), got " +
                                    shape_str(x.shape()) + " and " + shape_str(w.shape()));
    }
    const std::size_t n = x.shape()[0], cin = x.shape()[1], h = x.shape()[2], wd = x.shape()[3];
    const std::size_t cout = w.shape()[0], kh = w.shape()[2], kw = w.shape()[3];
    if (w.shape()[1] != cin) {
        throw std::invalid_argument("conv2d: input has " + std::to_string(cin) +
                                    " channels but kernel expects " + std::to_string(w.shape()[1]));
    }
    if (bias.defined() && (bias.rank() != 1 || bias.shape()[0] != cout)) {
        throw std::invalid_argument("conv2d: bias shape " + shape_str(bias.shape()) +
                                    " does not match " + std::to_string(cout) + " output channels");
    }
    if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
    const std::ptrdiff_t ho_s = (static_cast<std::ptrdiff_t>(h + 2 * padding) -
                                 static_cast<std::ptrdiff_t>(kh)) /
                                    static_cast<std::ptrdiff_t>(stride) +
                                1;
    const std::ptrdiff_t wo_s = (static_cast<std::ptrdiff_t>(wd + 2 * padding) -
                                 static_cast<std::ptrdiff_t>(kw)) /
                                    static_cast<std::ptrdiff_t>(stride) +
                                1;
    if (ho_s <= 0 || wo_s <= 0 || h + 2 * padding < kh || wd + 2 * padding < kw) {
        throw std::invalid_argument("conv2d: nonpositive output extent for input " +
                                    shape_str(x.shape()) + " kernel " + shape_str(w.shape()));
    }
    const std::size_t ho = static_cast<std::size_t>(ho_s), wo = static_cast<std::size_t>(wo_s);
    const std::size_t ckk = cin * kh * kw;

    Tensor out({n, cout, ho, wo}, 0.0);
    out.impl()->dtype = detail::combine_dtype({&x, &w});
    auto& od = out.impl()->data;
    std::vector<double> col(ckk * ho * wo);
    for (std::size_t s = 0; s < n; ++s) {
        im2col(x.data().data() + s * cin * h * wd, cin, h, wd, kh, kw, stride, padding, ho, wo,
               col.data());
        detail::gemm_nn(cout, ckk, ho * wo, w.data().data(), col.data(), od.data() + s * cout * ho * wo,
                        false);
    }
    if (bias.defined()) {
        const auto& bd = bias.data();
        parallel_for(static_cast<std::ptrdiff_t>(n * cout), [&](std::size_t sc) {
            double* plane = od.data() + sc * ho * wo;
            const double bv = bd[sc % cout];
            for (std::size_t i = 0; i < ho * wo; ++i) plane[i] += bv;
        });
    }
    detail::apply_dtype(out);

    const bool has_bias = bias.defined();
    if (autograd::needs_graph({&x, &w, &bias})) {
        std::vector<Tensor> inputs = has_bias ? std::vector<Tensor>{x, w, bias}
                                              : std::vector<Tensor>{x, w};
        autograd::attach(out, "conv2d", std::move(inputs),
                         [n, cin, h, wd, cout, kh, kw, stride, padding, ho, wo, ckk,
                          has_bias](TensorImpl& self) {
            TensorImpl& xi = *self.node->inputs[0];
            TensorImpl& wi = *self.node->inputs[1];
            TensorImpl* bi = has_bias ? self.node->inputs[2].get() : nullptr;
            const bool need_x = xi.requires_grad;
            const bool need_w = wi.requires_grad;
            const bool need_b = bi && bi->requires_grad;
            if (need_x && xi.grad.empty()) xi.grad.assign(xi.data.size(), 0.0);
            if (need_w && wi.grad.empty()) wi.grad.assign(wi.data.size(), 0.0);
            if (need_b && bi->grad.empty()) bi->grad.assign(bi->data.size(), 0.0);

            std::vector<double> col((need_w || need_x) ? ckk * ho * wo : 0);
            std::vector<double> dcol(need_x ? ckk * ho * wo : 0);
            for (std::size_t s = 0; s < n; ++s) {
                const double* g = self.grad.data() + s * cout * ho * wo;
                if (need_w) {
                    im2col(xi.data.data() + s * cin * h * wd, cin, h, wd, kh, kw, stride, padding,
                           ho, wo, col.data());
                    // dW (cout x ckk) += g (cout x howo) * col^T
                    detail::gemm_nt(cout, ho * wo, ckk, g, col.data(), wi.grad.data(), true);
                }
                if (need_x) {
                    // dcol (ckk x howo) = W^T (ckk x cout) * g
                    detail::gemm_tn(ckk, cout, ho * wo, wi.data.data(), g, dcol.data(), false);
                    col2im_add(dcol.data(), cin, h, wd, kh, kw, stride, padding, ho, wo,
                               xi.grad.data() + s * cin * h * wd);
                }
                if (need_b) {
                    for (std::size_t c = 0; c < cout; ++c) {
                        double acc = 0.0;
                        const double* gp = g + c * ho * wo;
                        for (std::size_t i = 0; i < ho * wo; ++i) acc += gp[i];
                        bi->grad[c] += acc;
                    }
                }
            }
        });
    }
    return out;
}

Tensor avg_pool2d(const Tensor& x, std::size_t k) {
    if (x.rank() != 4) throw std::invalid_argument("avg_pool2d: expected (N,C,H,W)");
    const std::size_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    if (k == 0 || h % k != 0 || w % k != 0) {
        throw std::invalid_argument("avg_pool2d: factor " + std::to_string(k) +
                                    " must divide spatial extents of " + shape_str(x.shape()));
    }
    const std::size_t ho = h / k, wo = w / k;
    Tensor out({n, c, ho, wo}, 0.0);
    out.impl()->dtype = x.dtype();
    auto& od = out.impl()->data;
    const auto& xd = x.data();
    const double inv = 1.0 / static_cast<double>(k * k);
    parallel_for(static_cast<std::ptrdiff_t>(n * c), [&](std::size_t p) {
        const double* plane = xd.data() + p * h * w;
        double* dst = od.data() + p * ho * wo;
        for (std::size_t oi = 0; oi < ho; ++oi) {
            for (std::size_t oj = 0; oj < wo; ++oj) {
                double acc = 0.0;
                for (std::size_t di = 0; di < k; ++di) {
                    for (std::size_t dj = 0; dj < k; ++dj) acc += plane[(oi * k + di) * w + oj * k + dj];
                }
                dst[oi * wo + oj] = acc * inv;
            }
        }
    });
    detail::apply_dtype(out);

    if (autograd::needs_graph({&x})) {
        autograd::attach(out, "avg_pool2d", {x}, [n, c, h, w, k, ho, wo, inv](TensorImpl& self) {
            TensorImpl& xi = *self.node->inputs[0];
            if (xi.grad.empty()) xi.grad.assign(xi.data.size(), 0.0);
            parallel_for(static_cast<std::ptrdiff_t>(n * c), [&](std::size_t p) {
                const double* g = self.grad.data() + p * ho * wo;
                double* dst = xi.grad.data() + p * h * w;
                for (std::size_t oi = 0; oi < ho; ++oi) {
                    for (std::size_t oj = 0; oj < wo; ++oj) {
                        const double gv = g[oi * wo + oj] * inv;
                        for (std::size_t di = 0; di < k; ++di) {
                            for (std::size_t dj = 0; dj < k; ++dj) {
                                dst[(oi * k + di) * w + oj * k + dj] += gv;
                            }
                        }
                    }
                }
            });
        });
    }
    return out;
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.rank() != 4) throw std::invalid_argument("global_avg_pool: expected (N,C,H,W)");
    Tensor m = mean(x, {2, 3}, false);
    return m;
}

Tensor upsample_nearest2x(const Tensor& x) {
    if (x.rank() != 4) throw std::invalid_argument("upsample_nearest2x: expected (N,C,H,W)");
    const std::size_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    Tensor out({n, c, h * 2, w * 2}, 0.0);
    out.impl()->dtype = x.dtype();
    auto& od = out.impl()->data;
    const auto& xd = x.data();
    parallel_for(static_cast<std::ptrdiff_t>(n * c), [&](std::size_t p) {
        const double* plane = xd.data() + p * h * w;
        double* dst = od.data() + p * 4 * h * w;
        for (std::size_t i = 0; i < 2 * h; ++i) {
            for (std::size_t j = 0; j < 2 * w; ++j) dst[i * 2 * w + j] = plane[(i / 2) * w + j / 2];
        }
    });
    detail::apply_dtype(out);

    if (autograd::needs_graph({&x})) {
        autograd::attach(out, "upsample_nearest2x", {x}, [n, c, h, w](TensorImpl& self) {
            TensorImpl& xi = *self.node->inputs[0];
            if (xi.grad.empty()) xi.grad.assign(xi.data.size(), 0.0);
            parallel_for(static_cast<std::ptrdiff_t>(n * c), [&](std::size_t p) {
                const double* g = self.grad.data() + p * 4 * h * w;
                double* dst = xi.grad.data() + p * h * w;
                for (std::size_t i = 0; i < 2 * h; ++i) {
                    for (std::size_t j = 0; j < 2 * w; ++j) dst[(i / 2) * w + j / 2] += g[i * 2 * w + j];
                }
            });
        });
    }
    return out;
}

Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    if (x.rank() != 4) throw std::invalid_argument("resize_bilinear: expected (N,C,H,W)");
    const std::size_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    if (out_h == 0 || out_w == 0) throw std::invalid_argument("resize_bilinear: empty target");

    // Half-pixel-center source coordinates, clamped at the borders.
    const double sh = static_cast<double>(h) / static_cast<double>(out_h);
    const double sw = static_cast<double>(w) / static_cast<double>(out_w);
    struct Tap {
        std::size_t lo, hi;
        double t;
    };
    auto taps = [](std::size_t out_n, std::size_t in_n, double scale) {
        std::vector<Tap> v(out_n);
        for (std::size_t i = 0; i < out_n; ++i) {
            double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
            if (src < 0.0) src = 0.0;
            double f = std::floor(src);
            std::size_t lo = static_cast<std::size_t>(f);
            if (lo >= in_n - 1) {
                v[i] = {in_n - 1, in_n - 1, 0.0};
            } else {
                v[i] = {lo, lo + 1, src - f};
            }
        }
        return v;
    };
    const auto ti = taps(out_h, h, sh);
    const auto tj = taps(out_w, w, sw);

    Tensor out({n, c, out_h, out_w}, 0.0);
    out.impl()->dtype = x.dtype();
    auto& od = out.impl()->data;
    const auto& xd = x.data();
    parallel_for(static_cast<std::ptrdiff_t>(n * c), [&](std::size_t p) {
        const double* plane = xd.data() + p * h * w;
        double* dst = od.data() + p * out_h * out_w;
        for (std::size_t i = 0; i < out_h; ++i) {
            for (std::size_t j = 0; j < out_w; ++j) {
                const Tap& a = ti[i];
                const Tap& b = tj[j];
                const double v00 = plane[a.lo * w + b.lo], v01 = plane[a.lo * w + b.hi];
                const double v10 = plane[a.hi * w + b.lo], v11 = plane[a.hi * w + b.hi];
                const double top = v00 + (v01 - v00) * b.t;
                const double bot = v10 + (v11 - v10) * b.t;
                dst[i * out_w + j] = top + (bot - top) * a.t;
            }
        }
    });
    detail::apply_dtype(out);

    if (autograd::needs_graph({&x})) {
        autograd::attach(out, "resize_bilinear", {x},
                         [n, c, h, w, out_h, out_w, ti, tj](TensorImpl& self) {
            TensorImpl& xi = *self.node->inputs[0];
            if (xi.grad.empty()) xi.grad.assign(xi.data.size(), 0.0);
            parallel_for(static_cast<std::ptrdiff_t>(n * c), [&](std::size_t p) {
                const double* g = self.grad.data() + p * out_h * out_w;
                double* dst = xi.grad.data() + p * h * w;
                for (std::size_t i = 0; i < out_h; ++i) {
                    for (std::size_t j = 0; j < out_w; ++j) {
                        const Tap& a = ti[i];
                        const Tap& b = tj[j];
                        const double gv = g[i * out_w + j];
                        dst[a.lo * w + b.lo] += gv * (1.0 - a.t) * (1.0 - b.t);
                        dst[a.lo * w + b.hi] += gv * (1.0 - a.t) * b.t;
                        dst[a.hi * w + b.lo] += gv * a.t * (1.0 - b.t);
                        dst[a.hi * w + b.hi] += gv * a.t * b.t;
                    }
                }
            });
        });
    }
    return out;
}

}  // namespace stsg
