#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "stsg/fft.hpp"
#include "stsg/ops.hpp"
#include "test_util.hpp"

using namespace stsg;
using testutil::max_abs_diff;
using testutil::rand_tensor;

namespace {

// O(n^4) double-sum DFT oracle over one plane.
void naive_dft2(const std::vector<double>& x, std::size_t h, std::size_t w,
                std::vector<double>& re, std::vector<double>& im) {
    re.assign(h * w, 0.0);
    im.assign(h * w, 0.0);
    for (std::size_t u = 0; u < h; ++u)
        for (std::size_t v = 0; v < w; ++v) {
            std::complex<double> acc = 0.0;
            for (std::size_t i = 0; i < h; ++i)
                for (std::size_t j = 0; j < w; ++j) {
                    const double ang = -2.0 * M_PI *
                                       (static_cast<double>(u * i) / static_cast<double>(h) +
                                        static_cast<double>(v * j) / static_cast<double>(w));
                    acc += x[i * w + j] * std::complex<double>(std::cos(ang), std::sin(ang));
                }
            re[u * w + v] = acc.real();
            im[u * w + v] = acc.imag();
        }
}

double check_against_naive(std::size_t h, std::size_t w, std::uint64_t seed) {
    Tensor x = rand_tensor({1, 1, h, w}, seed);
    SpectrumTensor s = rfft2(x);
    std::vector<double> re, im;
    naive_dft2(x.data(), h, w, re, im);
    const std::size_t wf = w / 2 + 1;
    double worst = 0.0;
    for (std::size_t u = 0; u < h; ++u)
        for (std::size_t v = 0; v < wf; ++v) {
            worst = std::max(worst, std::fabs(s.real.at({0, 0, u, v}) - re[u * w + v]));
            worst = std::max(worst, std::fabs(s.imag.at({0, 0, u, v}) - im[u * w + v]));
        }
    return worst;
}

}  // namespace

TEST_CASE("delta image transforms to an all-ones real spectrum") {
    Tensor x = Tensor::zeros({1, 1, 8, 8});
    x.mutable_data()[0] = 1.0;
    SpectrumTensor s = rfft2(x);
    for (double v : s.real.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : s.imag.data()) CHECK(std::fabs(v) < 1e-12);
}

TEST_CASE("constant image concentrates in the DC bin") {
    const double c = 2.75;
    Tensor x = Tensor::full({1, 1, 8, 16}, c);
    SpectrumTensor s = rfft2(x);
    CHECK(s.real.at({0, 0, 0, 0}) == doctest::Approx(c * 8 * 16));
    double off_dc = 0.0;
    for (std::size_t i = 1; i < s.real.size(); ++i) {
        off_dc = std::max(off_dc, std::fabs(s.real.data()[i]));
        off_dc = std::max(off_dc, std::fabs(s.imag.data()[i]));
    }
    CHECK(off_dc < 1e-10);
    CHECK(std::fabs(s.imag.data()[0]) < 1e-10);
}

TEST_CASE("rfft2 matches the naive O(n^4) DFT oracle") {
    SUBCASE("exhaustive over sizes {2,4,8}^2") {
        for (std::size_t h : {2, 4, 8})
            for (std::size_t w : {2, 4, 8}) {
                CAPTURE(h);
                CAPTURE(w);
                CHECK(check_against_naive(h, w, 1000 + h * 16 + w) < 1e-9);
            }
    }
    SUBCASE("random 8x8") { CHECK(check_against_naive(8, 8, 7) < 1e-9); }
    SUBCASE("random 16x16") { CHECK(check_against_naive(16, 16, 9) < 1e-9); }
}

TEST_CASE("irfft2 inverts rfft2 on a random 16x16 batch") {
    Tensor x = rand_tensor({2, 3, 16, 16}, 77);
    Tensor y = irfft2(rfft2(x));
    CHECK(max_abs_diff(x, y) < 1e-10);
}

TEST_CASE("zero spectrum inverts to a zero image") {
    SpectrumTensor s{Tensor::zeros({1, 1, 8, 5}), Tensor::zeros({1, 1, 8, 5}), 8};
    Tensor y = irfft2(s);
    for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("DC-only spectrum of value H*W inverts to the constant-1 image") {
    SpectrumTensor s{Tensor::zeros({1, 1, 4, 9}), Tensor::zeros({1, 1, 4, 9}), 16};
    s.real.mutable_data()[0] = 4.0 * 16.0;
    Tensor y = irfft2(s);
    for (double v : y.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("non-power-of-two extents are rejected") {
    CHECK_THROWS_AS(rfft2(Tensor::zeros({1, 1, 6, 8})), std::invalid_argument);
    CHECK_THROWS_AS(rfft2(Tensor::zeros({1, 1, 8, 12})), std::invalid_argument);
    SpectrumTensor s{Tensor::zeros({1, 1, 8, 4}), Tensor::zeros({1, 1, 8, 4}), 8};
    CHECK_THROWS_AS(irfft2(s), std::invalid_argument);  // Wf inconsistent with orig_w
}

TEST_CASE("linearity: rfft2(a*x + b*y) == a*rfft2(x) + b*rfft2(y)") {
    const double a = 1.7, b = -0.45;
    Tensor x = rand_tensor({1, 2, 8, 8}, 31);
    Tensor y = rand_tensor({1, 2, 8, 8}, 32);
    Tensor combo = add(mul_scalar(x, a), mul_scalar(y, b));
    SpectrumTensor sc = rfft2(combo);
    SpectrumTensor sx = rfft2(x);
    SpectrumTensor sy = rfft2(y);
    Tensor expect_re = add(mul_scalar(sx.real, a), mul_scalar(sy.real, b));
    Tensor expect_im = add(mul_scalar(sx.imag, a), mul_scalar(sy.imag, b));
    CHECK(max_abs_diff(sc.real, expect_re) < 1e-10);
    CHECK(max_abs_diff(sc.imag, expect_im) < 1e-10);
}

TEST_CASE("Parseval: spatial energy equals weighted half-spectrum energy") {
    const std::size_t h = 16, w = 16, wf = w / 2 + 1;
    Tensor x = rand_tensor({1, 1, h, w}, 55);
    SpectrumTensor s = rfft2(x);
    double spatial = 0.0;
    for (double v : x.data()) spatial += v * v;
    double spectral = 0.0;
    for (std::size_t u = 0; u < h; ++u)
        for (std::size_t v = 0; v < wf; ++v) {
            const double e = s.real.at({0, 0, u, v}) * s.real.at({0, 0, u, v}) +
                             s.imag.at({0, 0, u, v}) * s.imag.at({0, 0, u, v});
            // Interior columns stand in for their conjugate mirrors as well.
            spectral += (v == 0 || v == w / 2) ? e : 2.0 * e;
        }
    spectral /= static_cast<double>(h * w);
    CHECK(std::fabs(spatial - spectral) / spatial < 1e-9);
}

TEST_CASE("rfft2/irfft2 gradients match finite differences") {
    Tensor x = rand_tensor({1, 1, 4, 4}, 91, -1.0, 1.0, true);
    Tensor wre = rand_tensor({1, 1, 4, 3}, 92);
    Tensor wim = rand_tensor({1, 1, 4, 3}, 93);
    Tensor wsp = rand_tensor({1, 1, 4, 4}, 94);
    auto loss = [&]() {
        SpectrumTensor s = rfft2(x);
        Tensor y = irfft2(SpectrumTensor{mul(s.real, wre), mul(s.imag, wim), s.orig_w});
        return sum(mul(y, wsp));
    };
    CHECK(testutil::fd_max_rel_err(loss, {x}) < 1e-4);
}

TEST_CASE("fourier unit") {
    const std::size_t cg = 2;
    FourierUnit fu;
    fu.conv_w = Tensor::zeros({2 * cg, 2 * cg, 1, 1});
    for (std::size_t i = 0; i < 2 * cg; ++i) fu.conv_w.mutable_data()[i * 2 * cg + i] = 1.0;
    fu.conv_b = Tensor::zeros({2 * cg});
    fu.norm_gamma = Tensor::ones({2 * cg});
    fu.norm_beta = Tensor::zeros({2 * cg});

    SUBCASE("identity configuration reproduces the input") {
        fu.use_norm = false;
        fu.use_act = false;
        Tensor x = rand_tensor({2, cg, 8, 8}, 101);
        CHECK(max_abs_diff(fu.forward(x), x) < 1e-10);
    }
    SUBCASE("zero input with zero bias stays zero") {
        fu.use_norm = false;
        fu.use_act = false;
        Tensor x = Tensor::zeros({1, cg, 8, 8});
        Tensor y = fu.forward(x);
        for (double v : y.data()) CHECK(v == 0.0);
    }
    SUBCASE("zero input reduces to the bias path alone") {
        fu.use_norm = false;
        Tensor x = Tensor::zeros({1, cg, 8, 8});
        fu.conv_b = rand_tensor({2 * cg}, 103);
        Tensor got = fu.forward(x);
        // Manual bias path: a constant spectrum per channel, activated, inverted.
        Tensor re = broadcast_to(reshape(fu.conv_b, {1, 2 * cg, 1, 1}), {1, 2 * cg, 8, 5});
        Tensor act = relu(re);
        Tensor expect = irfft2(SpectrumTensor{slice(act, 1, 0, cg), slice(act, 1, cg, cg), 8});
        CHECK(max_abs_diff(got, expect) < 1e-12);
    }
    SUBCASE("gradient through the full unit matches finite differences") {
        Tensor x = rand_tensor({1, cg, 4, 4}, 104, -1.0, 1.0, true);
        fu.conv_w = rand_tensor({2 * cg, 2 * cg, 1, 1}, 105, -0.5, 0.5, true);
        fu.conv_b = rand_tensor({2 * cg}, 106, -0.1, 0.1, true);
        fu.norm_gamma = rand_tensor({2 * cg}, 107, 0.5, 1.5, true);
        fu.norm_beta = rand_tensor({2 * cg}, 108, -0.1, 0.1, true);
        Tensor wsum = rand_tensor({1, cg, 4, 4}, 109);
        auto loss = [&]() { return sum(mul(fu.forward(x), wsum)); };
        CHECK(testutil::fd_max_rel_err(loss, {x, fu.conv_w, fu.conv_b, fu.norm_gamma, fu.norm_beta}) <
              1e-4);
    }
}
