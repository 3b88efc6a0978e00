#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "kernels.hpp"
#include "stsg/ops.hpp"

namespace stsg {

namespace {

std::vector<std::size_t> contiguous_strides(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

void check_axes(const Shape& shape, const std::vector<std::size_t>& axes) {
    for (std::size_t a : axes) {
        if (a >= shape.size()) {
            throw std::invalid_argument("reduction axis " + std::to_string(a) +
                                        " out of range for shape " + shape_str(shape));
        }
    }
}

}  // namespace

Tensor sum(const Tensor& x) {
    std::vector<std::size_t> axes(x.rank());
    std::iota(axes.begin(), axes.end(), 0);
    Tensor s = sum(x, axes, false);
    return s;
}

Tensor sum(const Tensor& x, std::vector<std::size_t> axes, bool keepdim) {
    check_axes(x.shape(), axes);
    std::vector<bool> reduced(x.rank(), false);
    for (std::size_t a : axes) reduced[a] = true;

    Shape out_shape;
    for (std::size_t d = 0; d < x.rank(); ++d) {
        if (reduced[d]) {
            if (keepdim) out_shape.push_back(1);
        } else {
            out_shape.push_back(x.shape()[d]);
        }
    }
    if (out_shape.empty()) out_shape.push_back(1);

    // Map each input element to its output slot: stride 0 on reduced dims.
    std::vector<std::size_t> out_strides(x.rank(), 0);
    {
        std::size_t run = 1;
        for (std::size_t d = x.rank(); d-- > 0;) {
            if (!reduced[d]) {
                out_strides[d] = run;
                run *= x.shape()[d];
            }
        }
    }

    Tensor out(out_shape, 0.0);
    out.impl()->dtype = x.dtype();
    auto& od = out.impl()->data;
    const auto& xd = x.data();
    // Accumulate in row-major input order for a fixed summation order.
    detail::for_each_mapped(x.shape(), out_strides,
                            [&](std::size_t i, std::size_t io) { od[io] += xd[i]; });
    detail::apply_dtype(out);

    if (autograd::needs_graph({&x})) {
        Shape xshape = x.shape();
        autograd::attach(out, "sum", {x}, [xshape, out_strides](TensorImpl& self) {
            TensorImpl& xi = *self.node->inputs[0];
            if (xi.grad.empty()) xi.grad.assign(xi.data.size(), 0.0);
            detail::for_each_mapped(xshape, out_strides,
                                    [&](std::size_t i, std::size_t io) { xi.grad[i] += self.grad[io]; });
        });
    }
    return out;
}

Tensor mean(const Tensor& x, std::vector<std::size_t> axes, bool keepdim) {
    check_axes(x.shape(), axes);
    std::size_t count = 1;
    std::vector<bool> seen(x.rank(), false);
    for (std::size_t a : axes) {
        if (!seen[a]) count *= x.shape()[a];
        seen[a] = true;
    }
    return mul_scalar(sum(x, std::move(axes), keepdim), 1.0 / static_cast<double>(count));
}

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.size()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                    shape_str(new_shape));
    }
    Tensor out(new_shape, x.data());
    out.impl()->dtype = x.dtype();
    if (autograd::needs_graph({&x})) {
        autograd::attach(out, "reshape", {x}, [](TensorImpl& self) {
            autograd::accumulate_grad(*self.node->inputs[0], self.grad);
        });
    }
    return out;
}

Tensor permute(const Tensor& x, std::vector<std::size_t> perm) {
    if (perm.size() != x.rank()) {
        throw std::invalid_argument("permute: axis list rank mismatch for shape " + shape_str(x.shape()));
    }
    std::vector<bool> seen(perm.size(), false);
    for (std::size_t p : perm) {
        if (p >= perm.size() || seen[p]) throw std::invalid_argument("permute: invalid axis list");
        seen[p] = true;
    }

    Shape out_shape(perm.size());
    for (std::size_t d = 0; d < perm.size(); ++d) out_shape[d] = x.shape()[perm[d]];

    const auto in_strides = contiguous_strides(x.shape());
    std::vector<std::size_t> mapped(perm.size());
    for (std::size_t d = 0; d < perm.size(); ++d) mapped[d] = in_strides[perm[d]];

    Tensor out(out_shape, 0.0);
    out.impl()->dtype = x.dtype();
    auto& od = out.impl()->data;
    const auto& xd = x.data();
    detail::for_each_mapped(out_shape, mapped, [&](std::size_t i, std::size_t ix) { od[i] = xd[ix]; });

    if (autograd::needs_graph({&x})) {
        autograd::attach(out, "permute", {x}, [out_shape, mapped](TensorImpl& self) {
            TensorImpl& xi = *self.node->inputs[0];
            if (xi.grad.empty()) xi.grad.assign(xi.data.size(), 0.0);
            detail::for_each_mapped(out_shape, mapped,
                                    [&](std::size_t i, std::size_t ix) { xi.grad[ix] += self.grad[i]; });
        });
    }
    return out;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
    if (axis >= x.rank() || start + length > x.shape()[axis] || length == 0) {
        throw std::invalid_argument("slice: range [" + std::to_string(start) + "," +
                                    std::to_string(start + length) + ") invalid on axis " +
                                    std::to_string(axis) + " of " + shape_str(x.shape()));
    }
    Shape out_shape = x.shape();
    out_shape[axis] = length;

    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= x.shape()[d];
    for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.shape()[d];
    const std::size_t e = x.shape()[axis];

    Tensor out(out_shape, 0.0);
    out.impl()->dtype = x.dtype();
    auto& od = out.impl()->data;
    const auto& xd = x.data();
    for (std::size_t o = 0; o < outer; ++o) {
        const double* src = xd.data() + (o * e + start) * inner;
        double* dst = od.data() + o * length * inner;
        std::copy(src, src + length * inner, dst);
    }

    if (autograd::needs_graph({&x})) {
        autograd::attach(out, "slice", {x}, [outer, inner, e, start, length](TensorImpl& self) {
            TensorImpl& xi = *self.node->inputs[0];
            if (xi.grad.empty()) xi.grad.assign(xi.data.size(), 0.0);
            for (std::size_t o = 0; o < outer; ++o) {
                const double* g = self.grad.data() + o * length * inner;
                double* dst = xi.grad.data() + (o * e + start) * inner;
                for (std::size_t i = 0; i < length * inner; ++i) dst[i] += g[i];
            }
        });
    }
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    const Shape& ref = parts[0].shape();
    if (axis >= ref.size()) throw std::invalid_argument("concat: axis out of range");
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != ref.size()) throw std::invalid_argument("concat: rank mismatch");
        for (std::size_t d = 0; d < ref.size(); ++d) {
            if (d != axis && p.shape()[d] != ref[d]) {
                throw std::invalid_argument("concat: shape mismatch " + shape_str(p.shape()) + " vs " +
                                            shape_str(ref));
            }
        }
        total += p.shape()[axis];
    }

    Shape out_shape = ref;
    out_shape[axis] = total;
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= ref[d];
    for (std::size_t d = axis + 1; d < ref.size(); ++d) inner *= ref[d];

    Tensor out(out_shape, 0.0);
    bool all_f32 = true;
    for (const Tensor& p : parts) all_f32 = all_f32 && p.dtype() == DType::F32;
    out.impl()->dtype = all_f32 ? DType::F32 : DType::F64;

    auto& od = out.impl()->data;
    std::vector<std::size_t> extents;
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        const std::size_t e = p.shape()[axis];
        extents.push_back(e);
        const auto& pd = p.data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy(pd.data() + o * e * inner, pd.data() + (o + 1) * e * inner,
                      od.data() + (o * total + offset) * inner);
        }
        offset += e;
    }

    bool track = false;
    for (const Tensor& p : parts) track = track || p.requires_grad();
    if (autograd::grad_enabled() && track) {
        autograd::attach(out, "concat", parts, [outer, inner, total, extents](TensorImpl& self) {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < self.node->inputs.size(); ++k) {
                TensorImpl& pi = *self.node->inputs[k];
                const std::size_t e = extents[k];
                if (pi.requires_grad) {
                    if (pi.grad.empty()) pi.grad.assign(pi.data.size(), 0.0);
                    for (std::size_t o = 0; o < outer; ++o) {
                        const double* g = self.grad.data() + (o * total + offset) * inner;
                        double* dst = pi.grad.data() + o * e * inner;
                        for (std::size_t i = 0; i < e * inner; ++i) dst[i] += g[i];
                    }
                }
                offset += e;
            }
        });
    }
    return out;
}

Tensor broadcast_to(const Tensor& x, Shape target) {
    const Shape out_shape = detail::broadcast_shape("broadcast_to", x.shape(), target);
    if (out_shape != target) {
        throw std::invalid_argument("broadcast_to: cannot broadcast " + shape_str(x.shape()) + " to " +
                                    shape_str(target));
    }
    const auto sx = detail::broadcast_strides(x.shape(), target);
    Tensor out(target, 0.0);
    out.impl()->dtype = x.dtype();
    auto& od = out.impl()->data;
    const auto& xd = x.data();
    detail::for_each_mapped(target, sx, [&](std::size_t i, std::size_t ix) { od[i] = xd[ix]; });

    if (autograd::needs_graph({&x})) {
        autograd::attach(out, "broadcast_to", {x}, [target, sx](TensorImpl& self) {
            TensorImpl& xi = *self.node->inputs[0];
            if (xi.grad.empty()) xi.grad.assign(xi.data.size(), 0.0);
            detail::for_each_mapped(target, sx,
                                    [&](std::size_t i, std::size_t ix) { xi.grad[ix] += self.grad[i]; });
        });
    }
    return out;
}

}  // namespace stsg
