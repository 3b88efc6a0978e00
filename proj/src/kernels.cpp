#include "kernels.hpp"

#include <stdexcept>

#include "stsg/parallel.hpp"

namespace stsg::detail {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c, bool acc) {
    parallel_for(static_cast<std::ptrdiff_t>(m), [&](std::size_t i) {
        double* ci = c + i * n;
        if (!acc) {
            for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
        }
        const double* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    });
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* bt,
             double* c, bool acc) {
    parallel_for(static_cast<std::ptrdiff_t>(m), [&](std::size_t i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = bt + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
            if (acc) {
                ci[j] += s;
            } else {
                ci[j] = s;
            }
        }
    });
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* at, const double* b,
             double* c, bool acc) {
    parallel_for(static_cast<std::ptrdiff_t>(m), [&](std::size_t i) {
        double* ci = c + i * n;
        if (!acc) {
            for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
        }
        for (std::size_t p = 0; p < k; ++p) {
            const double av = at[p * m + i];
            if (av == 0.0) continue;
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    });
}

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t ea = i < a.size() ? a[a.size() - 1 - i] : 1;
        const std::size_t eb = i < b.size() ? b[b.size() - 1 - i] : 1;
        if (ea != eb && ea != 1 && eb != 1) {
            throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(a) + " and " +
                                        shape_str(b) + " are not broadcast-compatible");
        }
        out[rank - 1 - i] = std::max(ea, eb);
    }
    return out;
}

std::vector<std::size_t> broadcast_strides(const Shape& from, const Shape& to) {
    std::vector<std::size_t> strides(to.size(), 0);
    std::size_t run = 1;
    for (std::size_t i = 0; i < from.size(); ++i) {
        const std::size_t d_from = from.size() - 1 - i;
        const std::size_t d_to = to.size() - 1 - i;
        strides[d_to] = (from[d_from] == 1 && to[d_to] != 1) ? 0 : run;
        run *= from[d_from];
    }
    return strides;
}

DType combine_dtype(std::initializer_list<const Tensor*> inputs) {
    for (const Tensor* t : inputs) {
        if (t && t->defined() && t->dtype() == DType::F64) return DType::F64;
    }
    return DType::F32;
}

void apply_dtype(Tensor& t) {
    if (t.dtype() != DType::F32) return;
    for (double& v : t.impl()->data) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace stsg::detail
