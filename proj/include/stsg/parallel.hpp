#pragma once

#include <cstddef>

namespace stsg {

// Static parallel loop. Every iteration must write a disjoint slice of the
// output, so results are bitwise identical for any thread count.
template <class F>
void parallel_for(std::ptrdiff_t n, F&& f) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        f(static_cast<std::size_t>(i));
    }
#else
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        f(static_cast<std::size_t>(i));
    }
#endif
}

}  // namespace stsg
