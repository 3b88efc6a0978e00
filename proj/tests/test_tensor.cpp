#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "stsg/errors.hpp"
#include "stsg/ops.hpp"
#include "stsg/optim.hpp"
#include "stsg/serialize.hpp"
#include "test_util.hpp"

using namespace stsg;
using testutil::max_abs_diff;
using testutil::rand_tensor;

TEST_CASE("elementwise basics") {
    Tensor a = {1, 2};
    Tensor b = {3, 4};
    Tensor c = add(a, b);
    CHECK(c.data() == std::vector<double>{4, 6});

    Tensor x = rand_tensor({3, 4}, 7);
    CHECK(max_abs_diff(mul(x, Tensor::ones({3, 4})), x) == 0.0);

    CHECK_THROWS_WITH_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({4})),
                         doctest::Contains("(2,3)"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({4})),
                         doctest::Contains("(4)"), std::invalid_argument);
}

TEST_CASE("broadcast add (2,3)+(3,) matches scalar-loop oracle") {
    Tensor a = rand_tensor({2, 3}, 11);
    Tensor b = rand_tensor({3}, 12);
    Tensor c = add(a, b);
    auto expected = testutil::broadcast_binary_oracle(
        a.data(), a.shape(), b.data(), b.shape(), c.shape(), [](double x, double y) { return x + y; });
    CHECK(max_abs_diff(c.data(), expected) == 0.0);
}

TEST_CASE("broadcast ops agree with scalar-loop oracle on all shapes up to rank 4, extents <= 4") {
    // Exhaustive sweep over shape pairs; extents drawn from {1,2,4} to keep
    // the pair count reasonable while still covering every broadcast pattern.
    const std::vector<std::size_t> extents = {1, 2, 4};
    std::vector<Shape> shapes;
    std::function<void(Shape&, std::size_t)> gen = [&](Shape& cur, std::size_t rank) {
        if (rank == 0) {
            shapes.push_back(cur);
            return;
        }
        for (std::size_t e : extents) {
            cur.push_back(e);
            gen(cur, rank - 1);
            cur.pop_back();
        }
    };
    for (std::size_t r = 1; r <= 4; ++r) {
        Shape cur;
        gen(cur, r);
    }

    auto compatible = [](const Shape& a, const Shape& b) {
        const std::size_t rank = std::max(a.size(), b.size());
        for (std::size_t i = 0; i < rank; ++i) {
            const std::size_t ea = i < a.size() ? a[a.size() - 1 - i] : 1;
            const std::size_t eb = i < b.size() ? b[b.size() - 1 - i] : 1;
            if (ea != eb && ea != 1 && eb != 1) return false;
        }
        return true;
    };

    std::size_t checked = 0;
    for (const Shape& sa : shapes) {
        for (const Shape& sb : shapes) {
            if (!compatible(sa, sb)) continue;
            Tensor a = rand_tensor(sa, 100 + checked);
            Tensor b = rand_tensor(sb, 200 + checked);
            Tensor s = add(a, b);
            Tensor p = mul(a, b);
            auto se = testutil::broadcast_binary_oracle(a.data(), sa, b.data(), sb, s.shape(),
                                                        [](double x, double y) { return x + y; });
            auto pe = testutil::broadcast_binary_oracle(a.data(), sa, b.data(), sb, p.shape(),
                                                        [](double x, double y) { return x * y; });
            REQUIRE(max_abs_diff(s.data(), se) == 0.0);
            REQUIRE(max_abs_diff(p.data(), pe) == 0.0);
            ++checked;
        }
    }
    CHECK(checked > 1000);
}

TEST_CASE("matmul identity and hand expansion") {
    Tensor a = rand_tensor({4, 4}, 3);
    Tensor eye = Tensor::zeros({4, 4});
    for (int i = 0; i < 4; ++i) eye.mutable_data()[i * 4 + i] = 1.0;
    CHECK(max_abs_diff(matmul(a, eye), a) == 0.0);

    Tensor m({2, 2}, {1, 2, 3, 4});
    Tensor v({2, 1}, {1, 1});
    Tensor r = matmul(m, v);
    CHECK(r.data() == std::vector<double>{3, 7});

    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), std::invalid_argument);
}

TEST_CASE("matmul random 5x7 * 7x3 vs triple-loop oracle") {
    Tensor a = rand_tensor({5, 7}, 21);
    Tensor b = rand_tensor({7, 3}, 22);
    Tensor c = matmul(a, b);
    auto expected = testutil::matmul_oracle(a.data(), 5, 7, b.data(), 3);
    CHECK(max_abs_diff(c.data(), expected) < 1e-12);
}

TEST_CASE("batched matmul with broadcast batch dims") {
    Tensor a = rand_tensor({2, 3, 4, 5}, 31);
    Tensor b = rand_tensor({5, 6}, 32);
    Tensor c = matmul(a, b);
    REQUIRE(c.shape() == Shape{2, 3, 4, 6});
    for (std::size_t n = 0; n < 6; ++n) {
        std::vector<double> slice(a.data().begin() + n * 20, a.data().begin() + (n + 1) * 20);
        auto expected = testutil::matmul_oracle(slice, 4, 5, b.data(), 6);
        std::vector<double> got(c.data().begin() + n * 24, c.data().begin() + (n + 1) * 24);
        REQUIRE(max_abs_diff(got, expected) < 1e-13);
    }
}

TEST_CASE("conv2d identity, analytic sum, and oracle") {
    SUBCASE("1x1 kernel of value 1 is the identity") {
        Tensor x = rand_tensor({1, 1, 5, 5}, 41);
        Tensor w({1, 1, 1, 1}, {1.0});
        CHECK(max_abs_diff(conv2d(x, w, Tensor(), 1, 0), x) == 0.0);
    }
    SUBCASE("3x3 ones kernel on constant-5 input gives interior 45") {
        Tensor x = Tensor::full({1, 1, 8, 8}, 5.0);
        Tensor w = Tensor::ones({1, 1, 3, 3});
        Tensor y = conv2d(x, w, Tensor(), 1, 1);
        REQUIRE(y.shape() == Shape{1, 1, 8, 8});
        for (std::size_t i = 1; i < 7; ++i)
            for (std::size_t j = 1; j < 7; ++j) REQUIRE(y.at({0, 0, i, j}) == doctest::Approx(45.0));
        CHECK(y.at({0, 0, 0, 0}) == doctest::Approx(20.0));  // corner sees 4 taps
    }
    SUBCASE("random case vs direct-summation oracle") {
        Tensor x = rand_tensor({2, 3, 6, 7}, 42);
        Tensor w = rand_tensor({4, 3, 3, 3}, 43);
        Tensor b = rand_tensor({4}, 44);
        Tensor y = conv2d(x, w, b, 2, 1);
        auto expected =
            testutil::conv2d_oracle(x.data(), 2, 3, 6, 7, w.data(), 4, 3, 3, b.data(), 2, 1);
        CHECK(max_abs_diff(y.data(), expected) < 1e-10);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), Tensor(), 1, 0),
                        std::invalid_argument);
        CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 3, 3}), Tensor(), 1, 0),
                        std::invalid_argument);
    }
}

TEST_CASE("backward basics") {
    SUBCASE("loss = sum(x) gives unit gradients") {
        Tensor x({3}, {5, -1, 2}, true);
        sum(x).backward();
        CHECK(x.grad() == std::vector<double>{1, 1, 1});
    }
    SUBCASE("loss = sum(x*x) gives 2x") {
        Tensor x({3}, {1, 2, 3}, true);
        sum(mul(x, x)).backward();
        CHECK(x.grad() == std::vector<double>{2, 4, 6});
    }
    SUBCASE("gradient accumulation across two consumers") {
        Tensor x({2}, {1.5, -0.5}, true);
        Tensor y = add(mul(x, x), mul_scalar(x, 3.0));  // x^2 + 3x, duplicated path
        sum(y).backward();
        CHECK(x.grad()[0] == doctest::Approx(2 * 1.5 + 3));
        CHECK(x.grad()[1] == doctest::Approx(2 * -0.5 + 3));
    }
    SUBCASE("non-scalar loss is rejected") {
        Tensor x = Tensor::zeros({2}, true);
        Tensor y = mul(x, x);
        CHECK_THROWS_AS(y.backward(), std::invalid_argument);
    }
    SUBCASE("double backward through the same graph is rejected") {
        Tensor x = Tensor::ones({2}, true);
        Tensor l = sum(mul(x, x));
        l.backward();
        CHECK_THROWS_AS(l.backward(), NumericError);
    }
    SUBCASE("in-place mutation after capture is detected") {
        Tensor x = Tensor::ones({2}, true);
        Tensor l = sum(mul(x, x));
        x.mutable_data()[0] = 7.0;
        CHECK_THROWS_AS(l.backward(), NumericError);
    }
}

TEST_CASE("composite op gradient vs central finite differences") {
    Tensor x = rand_tensor({2, 3}, 51, -1.0, 1.0, true);
    Tensor w = rand_tensor({3, 2}, 52, -1.0, 1.0, true);
    auto loss = [&]() {
        Tensor h = relu(matmul(x, w));
        Tensor s = softmax(add(h, exp(mul_scalar(h, 0.5))), 1);
        return sum(mul(s, s));
    };
    CHECK(testutil::fd_max_rel_err(loss, {x, w}) < 1e-4);
}

TEST_CASE("division and sqrt gradients") {
    Tensor a = rand_tensor({4}, 61, 0.5, 2.0, true);
    Tensor b = rand_tensor({4}, 62, 0.5, 2.0, true);
    auto loss = [&]() { return sum(div(sqrt(a), add_scalar(b, 1.0))); };
    CHECK(testutil::fd_max_rel_err(loss, {a, b}) < 1e-4);
}

TEST_CASE("reductions, reshape, permute, slice, concat gradients") {
    Tensor x = rand_tensor({2, 3, 4}, 71, -1.0, 1.0, true);
    auto loss = [&]() {
        Tensor m = mean(x, {1}, true);          // (2,1,4)
        Tensor b = broadcast_to(m, {2, 3, 4});  // back up
        Tensor p = permute(sub(x, b), {2, 0, 1});
        Tensor s = slice(p, 0, 1, 2);
        Tensor c = concat({s, s}, 2);
        return sum(mul(c, c));
    };
    CHECK(testutil::fd_max_rel_err(loss, {x}) < 1e-4);
}

TEST_CASE("adam optimizer") {
    SUBCASE("first step is approximately -lr * sign(g)") {
        ParamStore store(0);
        Tensor p = store.create("p", {3}, Init::Zeros);
        p.mutable_data() = {1.0, 2.0, 3.0};
        Tensor loss = sum(mul(p, Tensor({3}, {0.5, -2.0, 1.0})));
        loss.backward();
        Adam opt({.lr = 0.01, .weight_decay = 0.0});
        opt.step(store);
        // bias-corrected first step: lr * g / (|g| + eps)
        CHECK(p.data()[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
        CHECK(p.data()[1] == doctest::Approx(2.0 + 0.01).epsilon(1e-6));
        CHECK(p.data()[2] == doctest::Approx(3.0 - 0.01).epsilon(1e-6));
    }
    SUBCASE("zero gradient leaves parameters unchanged") {
        ParamStore store(0);
        Tensor p = store.create("p", {2}, Init::Ones);
        Tensor loss = sum(mul(p, Tensor::zeros({2})));
        loss.backward();
        Adam opt({.lr = 0.1, .weight_decay = 0.0});
        opt.step(store);
        CHECK(p.data() == std::vector<double>{1.0, 1.0});
    }
    SUBCASE("three steps on f(t)=t^2 match a scalar hand-rolled oracle") {
        ParamStore store(0);
        Tensor p = store.create("theta", {1}, Init::Zeros);
        p.mutable_data() = {1.0};
        Adam opt({.lr = 0.1, .weight_decay = 0.0});
        for (int it = 0; it < 3; ++it) {
            Tensor loss = sum(mul(p, p));
            loss.backward();
            opt.step(store);
        }
        // scalar reference implementation
        double theta = 1.0, m = 0.0, v = 0.0;
        const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
        for (int t = 1; t <= 3; ++t) {
            const double g = 2.0 * theta;
            m = b1 * m + (1 - b1) * g;
            v = b2 * v + (1 - b2) * g * g;
            theta -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
        }
        CHECK(std::fabs(p.data()[0] - theta) < 1e-12);
    }
    SUBCASE("missing gradient raises") {
        ParamStore store(0);
        store.create("used", {2}, Init::Ones);
        Adam opt;
        CHECK_THROWS_AS(opt.step(store), NumericError);
    }
    SUBCASE("decoupled weight decay shrinks before the moment step") {
        ParamStore store(0);
        Tensor p = store.create("p", {1}, Init::Zeros);
        p.mutable_data() = {2.0};
        Tensor loss = sum(mul(p, Tensor::zeros({1})));  // zero grad
        loss.backward();
        Adam opt({.lr = 0.5, .weight_decay = 0.1});
        opt.step(store);
        CHECK(p.data()[0] == doctest::Approx(2.0 * (1.0 - 0.5 * 0.1)));
    }
}

TEST_CASE("identical seed and op sequence give bitwise-identical data and grads") {
    auto run = [&]() {
        ParamStore store(99);
        Tensor w = store.create("w", {4, 4}, Init::XavierUniform);
        Tensor x = rand_tensor({2, 4}, 5);
        Tensor loss = sum(mul(matmul(x, w), matmul(x, w)));
        loss.backward();
        return std::make_pair(w.data(), w.grad());
    };
    auto [d1, g1] = run();
    auto [d2, g2] = run();
    CHECK(d1 == d2);
    CHECK(g1 == g2);
}

TEST_CASE("f32 mode rounds through float while f64 stays exact") {
    Tensor a = rand_tensor({8}, 81);
    Tensor af = a.astype(DType::F32);
    Tensor s64 = add(a, a);
    Tensor s32 = add(af, af);
    CHECK(s32.dtype() == DType::F32);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(s32.data()[i] == static_cast<double>(static_cast<float>(af.data()[i] * 2.0f)));
    }
    CHECK(add(a, af).dtype() == DType::F64);  // mixed promotes to f64
    CHECK(s64.dtype() == DType::F64);
}

TEST_CASE("checkpoint round trip and error paths") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "stsg_test_ckpt.bin").string();

    ParamStore store(7);
    store.create("b.bias", {3}, Init::Zeros);
    store.create("a.weight", {2, 3}, Init::XavierUniform);
    save_checkpoint(store, path);

    SUBCASE("round trip is bitwise") {
        ParamStore loaded(0);
        loaded.create("a.weight", {2, 3}, Init::Zeros);
        loaded.create("b.bias", {3}, Init::Ones);
        load_checkpoint(loaded, path);
        CHECK(loaded.at("a.weight").data() == store.at("a.weight").data());
        CHECK(loaded.at("b.bias").data() == store.at("b.bias").data());
    }
    SUBCASE("corrupted magic is a distinct error") {
        std::string bad = path + ".m";
        {
            std::ifstream in(path, std::ios::binary);
            std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
            all[0] = 'X';
            std::ofstream out(bad, std::ios::binary);
            out.write(all.data(), static_cast<std::streamsize>(all.size()));
        }
        ParamStore loaded(0);
        loaded.create("a.weight", {2, 3}, Init::Zeros);
        loaded.create("b.bias", {3}, Init::Zeros);
        CHECK_THROWS_WITH_AS(load_checkpoint(loaded, bad), doctest::Contains("magic"),
                             CheckpointError);
        fs::remove(bad);
    }
    SUBCASE("truncation is detected") {
        std::string bad = path + ".t";
        {
            std::ifstream in(path, std::ios::binary);
            std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
            all.resize(all.size() - 5);
            std::ofstream out(bad, std::ios::binary);
            out.write(all.data(), static_cast<std::streamsize>(all.size()));
        }
        ParamStore loaded(0);
        loaded.create("a.weight", {2, 3}, Init::Zeros);
        loaded.create("b.bias", {3}, Init::Zeros);
        CHECK_THROWS_WITH_AS(load_checkpoint(loaded, bad), doctest::Contains("truncated"),
                             CheckpointError);
        fs::remove(bad);
    }
    SUBCASE("shape mismatch names the parameter") {
        ParamStore loaded(0);
        loaded.create("a.weight", {3, 2}, Init::Zeros);
        loaded.create("b.bias", {3}, Init::Zeros);
        CHECK_THROWS_WITH_AS(load_checkpoint(loaded, path), doctest::Contains("a.weight"),
                             CheckpointError);
    }
    SUBCASE("missing model parameter names the parameter") {
        ParamStore loaded(0);
        loaded.create("a.weight", {2, 3}, Init::Zeros);
        loaded.create("b.bias", {3}, Init::Zeros);
        loaded.create("c.extra", {1}, Init::Zeros);
        CHECK_THROWS_WITH_AS(load_checkpoint(loaded, path), doctest::Contains("c.extra"),
                             CheckpointError);
    }
    fs::remove(path);
}
