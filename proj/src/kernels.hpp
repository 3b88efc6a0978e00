#pragma once

// Internal compute kernels shared by the op implementations. Not installed.

#include <cstddef>
#include <vector>

#include "stsg/tensor.hpp"

namespace stsg::detail {

// Row-major GEMM variants. C is M x N; `acc` accumulates instead of overwriting.
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool acc);
// bt is N x K (i.e. B transposed)
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* bt,
             double* c, bool acc);
// at is K x M (i.e. A transposed)
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* at, const double* b,
             double* c, bool acc);

// Trailing-dimension broadcast shape. Throws std::invalid_argument naming both shapes.
Shape broadcast_shape(const char* op, const Shape& a, const Shape& b);

// Per-output-dimension element strides of `from` aligned to the trailing dims
// of `to`; broadcast dimensions get stride 0.
std::vector<std::size_t> broadcast_strides(const Shape& from, const Shape& to);

// Odometer over `shape` driving two broadcast input cursors.
template <class F>
void for_each_broadcast(const Shape& shape, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, F&& f) {
    const std::size_t n = shape_numel(shape);
    const std::size_t rank = shape.size();
    if (rank == 0) {
        f(std::size_t{0}, std::size_t{0}, std::size_t{0});
        return;
    }
    std::vector<std::size_t> coord(rank, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t i = 0; i < n; ++i) {
        f(i, ia, ib);
        for (std::size_t d = rank; d-- > 0;) {
            ia += sa[d];
            ib += sb[d];
            if (++coord[d] < shape[d]) break;
            ia -= sa[d] * shape[d];
            ib -= sb[d] * shape[d];
            coord[d] = 0;
        }
    }
}

// Single-input variant.
template <class F>
void for_each_mapped(const Shape& shape, const std::vector<std::size_t>& sa, F&& f) {
    std::vector<std::size_t> zeros(shape.size(), 0);
    for_each_broadcast(shape, sa, zeros, [&](std::size_t i, std::size_t ia, std::size_t) { f(i, ia); });
}

// Result dtype propagation: F32 only if every input is tagged F32.
DType combine_dtype(std::initializer_list<const Tensor*> inputs);

// Rounds data through float when the tensor is tagged F32.
void apply_dtype(Tensor& t);

}  // namespace stsg::detail
