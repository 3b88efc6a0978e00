#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace stsg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

enum class DType { F64, F32 };

struct TensorImpl;

// One record of the backward graph: the op tag, the inputs captured at
// forward time, and a closure that routes the output gradient into them.
struct GradNode {
    const char* op = "";
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::vector<std::uint64_t> input_versions;
    std::function<void(TensorImpl&)> backward;
    bool consumed = false;
};

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    DType dtype = DType::F64;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until first accumulation; grads are always f64
    std::shared_ptr<GradNode> node;
    std::uint64_t version = 0;
};

// Dense n-d tensor with optional reverse-mode gradient tracking. Value
// semantics on the handle; the storage is shared. Data is held as f64;
// tensors tagged F32 have each op result rounded through float.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, double fill, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);
    Tensor(std::initializer_list<double> values);  // rank-1

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor ones(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const;
    std::size_t size() const;
    std::size_t extent(std::size_t axis) const;
    DType dtype() const;
    Tensor astype(DType dt) const;  // detached copy

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value);

    const std::vector<double>& data() const;
    // Bumps the version counter; mutating a tensor already captured by a
    // graph makes the next backward() fail loudly instead of silently
    // producing stale gradients.
    std::vector<double>& mutable_data();
    double item() const;
    double at(std::initializer_list<std::size_t> idx) const;

    bool has_grad() const;
    const std::vector<double>& grad() const;
    void zero_grad();

    // Reverse-mode differentiation from a scalar. Accumulates (+=) into the
    // grad of every reachable requires_grad tensor. The traversed graph is
    // consumed; a second backward through it throws.
    void backward() const;

    Tensor detach() const;

    std::shared_ptr<TensorImpl>& impl() { return impl_; }
    const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

namespace autograd {

bool grad_enabled();

// Disables graph construction within scope (inference / optimizer internals).
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool needs_graph(std::initializer_list<const Tensor*> inputs);
void attach(Tensor& out, const char* op, std::vector<Tensor> inputs,
            std::function<void(TensorImpl&)> fn);
void accumulate_grad(TensorImpl& t, const double* g, std::size_t n);
void accumulate_grad(TensorImpl& t, const std::vector<double>& g);

}  // namespace autograd

}  // namespace stsg
