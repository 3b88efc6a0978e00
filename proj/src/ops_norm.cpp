#include <cmath>
#include <stdexcept>

#include "kernels.hpp"
#include "stsg/ops.hpp"
#include "stsg/parallel.hpp"

namespace stsg {

namespace {

// Decompose a shape around `axis` into (outer, extent, inner) so that slices
// along the axis can be walked with two nested loops.
struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
    AxisSplit sp;
    for (std::size_t d = 0; d < axis; ++d) sp.outer *= s[d];
    sp.extent = s[axis];
    for (std::size_t d = axis + 1; d < s.size(); ++d) sp.inner *= s[d];
    return sp;
}

}  // namespace

Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank()) throw std::invalid_argument("softmax: axis out of range");
    for (double v : x.data()) {
        if (std::isnan(v)) throw std::invalid_argument("softmax: NaN input");
    }
    const AxisSplit sp = split_axis(x.shape(), axis);

    Tensor out(x.shape(), 0.0);
    out.impl()->dtype = x.dtype();
    auto& od = out.impl()->data;
    const auto& xd = x.data();
    parallel_for(static_cast<std::ptrdiff_t>(sp.outer * sp.inner), [&](std::size_t oi) {
        const std::size_t o = oi / sp.inner;
        const std::size_t in = oi % sp.inner;
        const std::size_t base = o * sp.extent * sp.inner + in;
        double mx = xd[base];
        for (std::size_t e = 1; e < sp.extent; ++e) mx = std::max(mx, xd[base + e * sp.inner]);
        double z = 0.0;
        for (std::size_t e = 0; e < sp.extent; ++e) {
            const double v = std::exp(xd[base + e * sp.inner] - mx);
            od[base + e * sp.inner] = v;
            z += v;
        }
        const double inv = 1.0 / z;
        for (std::size_t e = 0; e < sp.extent; ++e) od[base + e * sp.inner] *= inv;
    });
    detail::apply_dtype(out);

    if (autograd::needs_graph({&x})) {
        autograd::attach(out, "softmax", {x}, [sp](TensorImpl& self) {
            TensorImpl& xi = *self.node->inputs[0];
            if (xi.grad.empty()) xi.grad.assign(xi.data.size(), 0.0);
            parallel_for(static_cast<std::ptrdiff_t>(sp.outer * sp.inner), [&](std::size_t oi) {
                const std::size_t o = oi / sp.inner;
                const std::size_t in = oi % sp.inner;
                const std::size_t base = o * sp.extent * sp.inner + in;
                double dot = 0.0;
                for (std::size_t e = 0; e < sp.extent; ++e) {
                    const std::size_t idx = base + e * sp.inner;
                    dot += self.grad[idx] * self.data[idx];
                }
                for (std::size_t e = 0; e < sp.extent; ++e) {
                    const std::size_t idx = base + e * sp.inner;
                    xi.grad[idx] += self.data[idx] * (self.grad[idx] - dot);
                }
            });
        });
    }
    return out;
}

namespace {

// Normalizes contiguous runs of length m. The affine parameters either stay
// constant within a run and cycle with period `period` across runs
// (instance norm: one gamma per channel) or vary per element inside the run
// (layer norm: one gamma per feature).
Tensor norm_over_runs(const char* tag, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                      double eps, std::size_t runs, std::size_t m, std::size_t period,
                      bool affine_per_run) {
    const std::size_t expected = affine_per_run ? period : m;
    if (gamma.size() != expected || beta.size() != expected) {
        throw std::invalid_argument(std::string(tag) + ": gamma/beta must have " +
                                    std::to_string(expected) + " elements, got " +
                                    shape_str(gamma.shape()) + " / " + shape_str(beta.shape()));
    }

    Tensor out(x.shape(), 0.0);
    out.impl()->dtype = x.dtype();
    auto& od = out.impl()->data;
    const auto& xd = x.data();
    const auto& gd = gamma.data();
    const auto& bd = beta.data();

    auto stats = std::make_shared<std::vector<double>>(2 * runs);  // mean, inv_std per run
    parallel_for(static_cast<std::ptrdiff_t>(runs), [&](std::size_t r) {
        const double* src = xd.data() + r * m;
        double mu = 0.0;
        for (std::size_t i = 0; i < m; ++i) mu += src[i];
        mu /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double d = src[i] - mu;
            var += d * d;
        }
        var /= static_cast<double>(m);
        const double inv_std = 1.0 / std::sqrt(var + eps);
        (*stats)[2 * r] = mu;
        (*stats)[2 * r + 1] = inv_std;
        double* dst = od.data() + r * m;
        if (affine_per_run) {
            const double g = gd[r % period];
            const double b = bd[r % period];
            for (std::size_t i = 0; i < m; ++i) dst[i] = g * (src[i] - mu) * inv_std + b;
        } else {
            for (std::size_t i = 0; i < m; ++i) dst[i] = gd[i] * (src[i] - mu) * inv_std + bd[i];
        }
    });
    detail::apply_dtype(out);

    if (autograd::needs_graph({&x, &gamma, &beta})) {
        autograd::attach(out, tag, {x, gamma, beta},
                         [runs, m, period, affine_per_run, stats](TensorImpl& self) {
            TensorImpl& xi = *self.node->inputs[0];
            TensorImpl& gi = *self.node->inputs[1];
            TensorImpl& bi = *self.node->inputs[2];
            const bool need_x = xi.requires_grad;
            const bool need_g = gi.requires_grad;
            const bool need_b = bi.requires_grad;
            if (need_x && xi.grad.empty()) xi.grad.assign(xi.data.size(), 0.0);
            if (need_g && gi.grad.empty()) gi.grad.assign(gi.data.size(), 0.0);
            if (need_b && bi.grad.empty()) bi.grad.assign(bi.data.size(), 0.0);

            // gamma/beta grads accumulate across runs; keep the run loop
            // sequential for a fixed summation order.
            for (std::size_t r = 0; r < runs; ++r) {
                const double mu = (*stats)[2 * r];
                const double inv_std = (*stats)[2 * r + 1];
                const double* src = xi.data.data() + r * m;
                const double* g = self.grad.data() + r * m;

                // ghat_i = dL/dxhat_i = g_i * gamma_i
                double sum_gh = 0.0, sum_ghx = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double gv = affine_per_run ? gi.data[r % period] : gi.data[i];
                    const double xh = (src[i] - mu) * inv_std;
                    const double gh = g[i] * gv;
                    sum_gh += gh;
                    sum_ghx += gh * xh;
                    if (need_g) {
                        gi.grad[affine_per_run ? (r % period) : i] += g[i] * xh;
                    }
                    if (need_b) {
                        bi.grad[affine_per_run ? (r % period) : i] += g[i];
                    }
                }
                if (need_x) {
                    double* dst = xi.grad.data() + r * m;
                    const double inv_m = 1.0 / static_cast<double>(m);
                    for (std::size_t i = 0; i < m; ++i) {
                        const double gv = affine_per_run ? gi.data[r % period] : gi.data[i];
                        const double xh = (src[i] - mu) * inv_std;
                        const double gh = g[i] * gv;
                        dst[i] += inv_std * (gh - inv_m * sum_gh - xh * inv_m * sum_ghx);
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.rank() != 4) throw std::invalid_argument("instance_norm: expected (N,C,H,W)");
    const std::size_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    (void)n;
    return norm_over_runs("instance_norm", x, gamma, beta, eps, x.shape()[0] * c, h * w, c, true);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.rank() == 0) throw std::invalid_argument("layer_norm: scalar input");
    const std::size_t d = x.shape().back();
    return norm_over_runs("layer_norm", x, gamma, beta, eps, x.size() / d, d, d, false);
}

}  // namespace stsg
