#include <cmath>
#include <stdexcept>

#include "kernels.hpp"
#include "stsg/ops.hpp"

namespace stsg {

using detail::broadcast_shape;
using detail::broadcast_strides;
using detail::for_each_broadcast;

namespace {

// Shared skeleton for broadcasting binary ops. `fwd(a,b)` computes the value;
// `bwd(g, a, b, &ga, &gb)` maps the output gradient to input gradients.
template <class Fwd, class Bwd>
Tensor binary_op(const char* tag, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
    const Shape out_shape = broadcast_shape(tag, a.shape(), b.shape());
    Tensor out(out_shape, 0.0);
    out.impl()->dtype = detail::combine_dtype({&a, &b});

    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& od = out.impl()->data;

    if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < od.size(); ++i) od[i] = fwd(ad[i], bd[i]);
    } else {
        const auto sa = broadcast_strides(a.shape(), out_shape);
        const auto sb = broadcast_strides(b.shape(), out_shape);
        for_each_broadcast(out_shape, sa, sb,
                           [&](std::size_t i, std::size_t ia, std::size_t ib) { od[i] = fwd(ad[ia], bd[ib]); });
    }
    detail::apply_dtype(out);

    if (autograd::needs_graph({&a, &b})) {
        Shape ashape = a.shape(), bshape = b.shape();
        autograd::attach(out, tag, {a, b}, [=, out_shape = out_shape](TensorImpl& self) {
            TensorImpl& ai = *self.node->inputs[0];
            TensorImpl& bi = *self.node->inputs[1];
            const bool need_a = ai.requires_grad;
            const bool need_b = bi.requires_grad;
            if (need_a && ai.grad.empty()) ai.grad.assign(ai.data.size(), 0.0);
            if (need_b && bi.grad.empty()) bi.grad.assign(bi.data.size(), 0.0);
            const auto sa = broadcast_strides(ashape, out_shape);
            const auto sb = broadcast_strides(bshape, out_shape);
            for_each_broadcast(out_shape, sa, sb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                double ga = 0.0, gb = 0.0;
                bwd(self.grad[i], ai.data[ia], bi.data[ib], ga, gb);
                if (need_a) ai.grad[ia] += ga;
                if (need_b) bi.grad[ib] += gb;
            });
        });
    }
    return out;
}

template <class Fwd, class Bwd>
Tensor unary_op(const char* tag, const Tensor& x, Fwd fwd, Bwd bwd) {
    Tensor out(x.shape(), 0.0);
    out.impl()->dtype = x.dtype();
    const auto& xd = x.data();
    auto& od = out.impl()->data;
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = fwd(xd[i]);
    detail::apply_dtype(out);

    if (autograd::needs_graph({&x})) {
        autograd::attach(out, tag, {x}, [bwd](TensorImpl& self) {
            TensorImpl& xi = *self.node->inputs[0];
            if (xi.grad.empty()) xi.grad.assign(xi.data.size(), 0.0);
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                xi.grad[i] += bwd(self.grad[i], xi.data[i], self.data[i]);
            }
        });
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double g, double, double, double& ga, double& gb) {
            ga = g;
            gb = g;
        });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double g, double, double, double& ga, double& gb) {
            ga = g;
            gb = -g;
        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double g, double x, double y, double& ga, double& gb) {
            ga = g * y;
            gb = g * x;
        });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary_op(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double g, double x, double y, double& ga, double& gb) {
            ga = g / y;
            gb = -g * x / (y * y);
        });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
    return binary_op(
        "maximum", a, b, [](double x, double y) { return x >= y ? x : y; },
        [](double g, double x, double y, double& ga, double& gb) {
            // Ties route to the first operand.
            if (x >= y) {
                ga = g;
            } else {
                gb = g;
            }
        });
}

Tensor neg(const Tensor& x) {
    return unary_op(
        "neg", x, [](double v) { return -v; }, [](double g, double, double) { return -g; });
}

Tensor add_scalar(const Tensor& x, double c) {
    return unary_op(
        "add_scalar", x, [c](double v) { return v + c; }, [](double g, double, double) { return g; });
}

Tensor mul_scalar(const Tensor& x, double c) {
    return unary_op(
        "mul_scalar", x, [c](double v) { return v * c; }, [c](double g, double, double) { return g * c; });
}

Tensor relu(const Tensor& x) {
    return unary_op(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double g, double v, double) { return v > 0.0 ? g : 0.0; });
}

Tensor exp(const Tensor& x) {
    return unary_op(
        "exp", x, [](double v) { return std::exp(v); }, [](double g, double, double y) { return g * y; });
}

Tensor log(const Tensor& x) {
    return unary_op(
        "log", x, [](double v) { return std::log(v); }, [](double g, double v, double) { return g / v; });
}

Tensor sqrt(const Tensor& x) {
    return unary_op(
        "sqrt", x, [](double v) { return std::sqrt(v); },
        [](double g, double, double y) { return 0.5 * g / y; });
}

}  // namespace stsg
