#include "stsg/fft.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "stsg/ops.hpp"
#include "stsg/parallel.hpp"

namespace stsg {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

bool power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey on a contiguous complex signal.
// `conj_twiddles` selects e^{+i...} (the inverse direction); no normalization.
void fft1d(double* re, double* im, std::size_t n, bool conj_twiddles) {
    if (n == 1) return;
    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (conj_twiddles ? kTwoPi : -kTwoPi) / static_cast<double>(len);
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (std::size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::size_t a = i + k, b = i + k + len / 2;
                const double tr = re[b] * cr - im[b] * ci;
                const double ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

// 2-d transform of one H x W plane, rows then columns.
void fft2d(double* re, double* im, std::size_t h, std::size_t w, bool conj_twiddles) {
    for (std::size_t r = 0; r < h; ++r) fft1d(re + r * w, im + r * w, w, conj_twiddles);
    std::vector<double> cre(h), cim(h);
    for (std::size_t c = 0; c < w; ++c) {
        for (std::size_t r = 0; r < h; ++r) {
            cre[r] = re[r * w + c];
            cim[r] = im[r * w + c];
        }
        fft1d(cre.data(), cim.data(), h, conj_twiddles);
        for (std::size_t r = 0; r < h; ++r) {
            re[r * w + c] = cre[r];
            im[r * w + c] = cim[r];
        }
    }
}

}  // namespace

SpectrumTensor rfft2(const Tensor& x) {
    if (x.rank() != 4) throw std::invalid_argument("rfft2: expected (N,C,H,W)");
    const std::size_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    if (!power_of_two(h) || !power_of_two(w)) {
        throw std::invalid_argument("rfft2: spatial extents must be powers of two, got " +
                                    shape_str(x.shape()));
    }
    const std::size_t wf = w / 2 + 1;

    Tensor out_re({n, c, h, wf}, 0.0);
    Tensor out_im({n, c, h, wf}, 0.0);
    auto& red = out_re.impl()->data;
    auto& imd = out_im.impl()->data;
    const auto& xd = x.data();
    parallel_for(static_cast<std::ptrdiff_t>(n * c), [&](std::size_t p) {
        std::vector<double> re(xd.begin() + p * h * w, xd.begin() + (p + 1) * h * w);
        std::vector<double> im(h * w, 0.0);
        fft2d(re.data(), im.data(), h, w, false);
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t q = 0; q < wf; ++q) {
                red[(p * h + r) * wf + q] = re[r * w + q];
                imd[(p * h + r) * wf + q] = im[r * w + q];
            }
        }
    });

    // Each output carries its own adjoint; the DFT is linear, so the two
    // contributions accumulate independently into x.grad.
    // d x = Re( IDFT_unnorm( zero-padded (g_re + i g_im) ) ), here with one
    // of the parts zero.
    auto attach_adjoint = [&](Tensor& out, bool imag_part) {
        if (!autograd::needs_graph({&x})) return;
        autograd::attach(out, imag_part ? "rfft2_imag" : "rfft2_real", {x},
                         [n, c, h, w, wf, imag_part](TensorImpl& self) {
            TensorImpl& xi = *self.node->inputs[0];
            if (xi.grad.empty()) xi.grad.assign(xi.data.size(), 0.0);
            parallel_for(static_cast<std::ptrdiff_t>(n * c), [&](std::size_t p) {
                std::vector<double> re(h * w, 0.0), im(h * w, 0.0);
                auto& half = imag_part ? im : re;
                for (std::size_t r = 0; r < h; ++r) {
                    for (std::size_t q = 0; q < wf; ++q) {
                        half[r * w + q] = self.grad[(p * h + r) * wf + q];
                    }
                }
                fft2d(re.data(), im.data(), h, w, true);
                double* dst = xi.grad.data() + p * h * w;
                for (std::size_t i = 0; i < h * w; ++i) dst[i] += re[i];
            });
        });
    };
    attach_adjoint(out_re, false);
    attach_adjoint(out_im, true);
    return {out_re, out_im, w};
}

Tensor irfft2(const SpectrumTensor& s) {
    if (!s.real.defined() || !s.imag.defined() || s.real.rank() != 4 ||
        s.real.shape() != s.imag.shape()) {
        throw std::invalid_argument("irfft2: real/imag parts must share a (N,C,H,Wf) shape");
    }
    const std::size_t n = s.real.shape()[0], c = s.real.shape()[1], h = s.real.shape()[2],
                      wf = s.real.shape()[3];
    const std::size_t w = s.orig_w;
    if (!power_of_two(h) || !power_of_two(w) || wf != w / 2 + 1) {
        throw std::invalid_argument("irfft2: inconsistent spectrum extents, Wf=" +
                                    std::to_string(wf) + " for orig_w=" + std::to_string(w));
    }

    Tensor out({n, c, h, w}, 0.0);
    auto& od = out.impl()->data;
    const auto& red = s.real.data();
    const auto& imd = s.imag.data();
    const double scale = 1.0 / static_cast<double>(h * w);
    parallel_for(static_cast<std::ptrdiff_t>(n * c), [&](std::size_t p) {
        std::vector<double> re(h * w), im(h * w);
        // Hermitian extension of the stored half-spectrum.
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t q = 0; q < wf; ++q) {
                re[r * w + q] = red[(p * h + r) * wf + q];
                im[r * w + q] = imd[(p * h + r) * wf + q];
            }
            for (std::size_t q = wf; q < w; ++q) {
                const std::size_t mr = (h - r) % h;
                const std::size_t mq = w - q;
                re[r * w + q] = red[(p * h + mr) * wf + mq];
                im[r * w + q] = -imd[(p * h + mr) * wf + mq];
            }
        }
        fft2d(re.data(), im.data(), h, w, true);
        double* dst = od.data() + p * h * w;
        for (std::size_t i = 0; i < h * w; ++i) dst[i] = re[i] * scale;
    });

    if (autograd::needs_graph({&s.real, &s.imag})) {
        autograd::attach(out, "irfft2", {s.real, s.imag},
                         [n, c, h, w, wf, scale](TensorImpl& self) {
            TensorImpl& ri = *self.node->inputs[0];
            TensorImpl& ii = *self.node->inputs[1];
            const bool need_r = ri.requires_grad;
            const bool need_i = ii.requires_grad;
            if (need_r && ri.grad.empty()) ri.grad.assign(ri.data.size(), 0.0);
            if (need_i && ii.grad.empty()) ii.grad.assign(ii.data.size(), 0.0);
            parallel_for(static_cast<std::ptrdiff_t>(n * c), [&](std::size_t p) {
                std::vector<double> re(self.grad.begin() + p * h * w,
                                       self.grad.begin() + (p + 1) * h * w);
                std::vector<double> im(h * w, 0.0);
                fft2d(re.data(), im.data(), h, w, false);
                // Stored bins receive their own contribution plus, for the
                // interior columns, the conjugated mirror's.
                for (std::size_t r = 0; r < h; ++r) {
                    for (std::size_t q = 0; q < wf; ++q) {
                        double gr = re[r * w + q];
                        double gi = im[r * w + q];
                        if (q != 0 && q != w / 2) {
                            const std::size_t mr = (h - r) % h;
                            const std::size_t mq = w - q;
                            gr += re[mr * w + mq];
                            gi -= im[mr * w + mq];
                        }
                        const std::size_t idx = (p * h + r) * wf + q;
                        if (need_r) ri.grad[idx] += gr * scale;
                        if (need_i) ii.grad[idx] += gi * scale;
                    }
                }
            });
        });
    }
    return out;
}

Tensor FourierUnit::forward(const Tensor& x) const {
    const std::size_t cg = x.shape()[1];
    SpectrumTensor s = rfft2(x);
    Tensor y = concat({s.real, s.imag}, 1);  // (N, 2C, H, Wf)
    y = conv2d(y, conv_w, conv_b, 1, 0);
    if (use_norm) y = instance_norm(y, norm_gamma, norm_beta);
    if (use_act) y = relu(y);
    SpectrumTensor mixed{slice(y, 1, 0, cg), slice(y, 1, cg, cg), s.orig_w};
    return irfft2(mixed);
}

}  // namespace stsg
