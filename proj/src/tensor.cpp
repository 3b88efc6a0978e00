#include "stsg/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "stsg/errors.hpp"

namespace stsg {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

namespace {

std::shared_ptr<TensorImpl> make_impl(Shape shape, std::vector<double> values, bool requires_grad) {
    for (std::size_t e : shape) {
        if (e == 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return impl;
}

}  // namespace

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
    std::vector<double> values(shape_numel(shape), fill);
    impl_ = make_impl(std::move(shape), std::move(values), requires_grad);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
    impl_ = make_impl(std::move(shape), std::move(values), requires_grad);
}

Tensor::Tensor(std::initializer_list<double> values) {
    impl_ = make_impl({values.size()}, std::vector<double>(values), false);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return Tensor(std::move(shape), 0.0, requires_grad); }
Tensor Tensor::ones(Shape shape, bool requires_grad) { return Tensor(std::move(shape), 1.0, requires_grad); }
Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    return Tensor(std::move(shape), value, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::rank() const { return impl_->shape.size(); }
std::size_t Tensor::size() const { return impl_->data.size(); }

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= impl_->shape.size()) {
        throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for shape " +
                                    shape_str(impl_->shape));
    }
    return impl_->shape[axis];
}

DType Tensor::dtype() const { return impl_->dtype; }

Tensor Tensor::astype(DType dt) const {
    Tensor out(impl_->shape, impl_->data, false);
    out.impl_->dtype = dt;
    if (dt == DType::F32) {
        for (double& v : out.impl_->data) v = static_cast<double>(static_cast<float>(v));
    }
    return out;
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
    impl_->requires_grad = value;
    return *this;
}

const std::vector<double>& Tensor::data() const { return impl_->data; }

std::vector<double>& Tensor::mutable_data() {
    ++impl_->version;
    return impl_->data;
}

double Tensor::item() const {
    if (impl_->data.size() != 1) {
        throw std::invalid_argument("item() requires a scalar tensor, got shape " + shape_str(impl_->shape));
    }
    return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != impl_->shape.size()) {
        throw std::invalid_argument("at(): index rank mismatch for shape " + shape_str(impl_->shape));
    }
    std::size_t linear = 0;
    std::size_t d = 0;
    for (std::size_t i : idx) {
        if (i >= impl_->shape[d]) throw std::invalid_argument("at(): index out of bounds");
        linear = linear * impl_->shape[d] + i;
        ++d;
    }
    return impl_->data[linear];
}

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

const std::vector<double>& Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0); }

Tensor Tensor::detach() const {
    Tensor out;
    out.impl_ = std::make_shared<TensorImpl>();
    out.impl_->shape = impl_->shape;
    out.impl_->data = impl_->data;
    out.impl_->dtype = impl_->dtype;
    return out;
}

namespace autograd {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool needs_graph(std::initializer_list<const Tensor*> inputs) {
    if (!g_grad_enabled) return false;
    for (const Tensor* t : inputs) {
        if (t && t->defined() && t->requires_grad()) return true;
    }
    return false;
}

void attach(Tensor& out, const char* op, std::vector<Tensor> inputs, std::function<void(TensorImpl&)> fn) {
    auto node = std::make_shared<GradNode>();
    node->op = op;
    node->inputs.reserve(inputs.size());
    node->input_versions.reserve(inputs.size());
    for (Tensor& t : inputs) {
        node->inputs.push_back(t.impl());
        node->input_versions.push_back(t.impl()->version);
    }
    node->backward = std::move(fn);
    out.impl()->node = std::move(node);
    out.impl()->requires_grad = true;
}

void accumulate_grad(TensorImpl& t, const double* g, std::size_t n) {
    if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) t.grad[i] += g[i];
}

void accumulate_grad(TensorImpl& t, const std::vector<double>& g) {
    accumulate_grad(t, g.data(), g.size());
}

}  // namespace autograd

void Tensor::backward() const {
    if (!defined()) throw std::invalid_argument("backward: tensor is undefined");
    if (impl_->data.size() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(impl_->shape));
    }

    // Iterative topological sort over the node graph.
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack;
    if (impl_->node) stack.push_back({impl_.get(), 0});
    visited.insert(impl_.get());
    while (!stack.empty()) {
        auto& [t, next] = stack.back();
        if (!t->node || next >= t->node->inputs.size()) {
            order.push_back(t);
            stack.pop_back();
            continue;
        }
        TensorImpl* child = t->node->inputs[next].get();
        ++next;
        if (child->node && !visited.count(child)) {
            visited.insert(child);
            stack.push_back({child, 0});
        }
    }

    for (TensorImpl* t : order) {
        if (t->node->consumed) {
            throw NumericError("backward: graph already consumed; double backward is not supported");
        }
        for (std::size_t i = 0; i < t->node->inputs.size(); ++i) {
            if (t->node->inputs[i]->version != t->node->input_versions[i]) {
                throw NumericError(std::string("backward: input of op '") + t->node->op +
                                   "' was modified in place after graph capture");
            }
        }
    }

    impl_->grad.assign(1, 1.0);

    // `order` ends at the loss; walk it in reverse.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* t = *it;
        t->node->consumed = true;
        if (t->grad.empty()) continue;  // no gradient flowed into this node
        t->node->backward(*t);
    }
}

}  // namespace stsg
