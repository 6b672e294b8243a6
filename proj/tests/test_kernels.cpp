#include <doctest.h>

#include "aide/kernels.hpp"
#include "test_support.hpp"

using namespace aide;
using namespace aide::test;

TEST_CASE("conv2d: 3x3 ones against 3x3 ones kernel sums to 9") {
    Tensor4 in(1, 1, 3, 3);
    in.fill(1.0);
    Tensor4 k(1, 1, 3, 3);
    k.fill(1.0);
    Tensor4 out = conv2d_forward(in, k, Tensor4(), 1, 0);
    REQUIRE(out.shape == std::array<int, 4>{1, 1, 1, 1});
    CHECK(out.data[0] == doctest::Approx(9.0).epsilon(1e-15));
}

TEST_CASE("conv2d: identity kernel with pad 1 reproduces the input") {
    Rng rng(7);
    Tensor4 in = random_tensor(2, 3, 6, 5, rng);
    Tensor4 k(3, 3, 3, 3);
    for (int c = 0; c < 3; ++c) k.at(c, c, 1, 1) = 1.0;
    Tensor4 out = conv2d_forward(in, k, Tensor4(), 1, 1);
    REQUIRE(out.shape == in.shape);
    CHECK(max_abs_diff(out, in) == 0.0);
}

TEST_CASE("conv2d: random case matches the brute-force reference") {
    Rng rng(42);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor4 in = random_tensor(2, 3, 8, 8, rng);
        Tensor4 k = random_tensor(4, 3, 5, 5, rng);
        Tensor4 b = random_tensor(1, 4, 1, 1, rng);
        for (int pad : {0, 1, 2}) {
            Tensor4 fast = conv2d_forward(in, k, b, 1, pad);
            Tensor4 slow = serial::conv2d_forward(in, k, b, 1, pad);
            REQUIRE(fast.shape == slow.shape);
            CHECK(max_rel_diff(fast, slow) < 1e-12);
        }
        // strided case
        Tensor4 fast = conv2d_forward(in, k, b, 2, 1);
        Tensor4 slow = serial::conv2d_forward(in, k, b, 2, 1);
        REQUIRE(fast.shape == slow.shape);
        CHECK(max_rel_diff(fast, slow) < 1e-12);
    }
}

TEST_CASE("conv2d: channel mismatch raises a dimension error naming both shapes") {
    Tensor4 in(1, 2, 8, 8);
    Tensor4 k(4, 3, 5, 5);
    CHECK_THROWS_WITH_AS(conv2d_forward(in, k, Tensor4(), 1, 0),
                         doctest::Contains("(1,2,8,8)"), DimensionError);
    CHECK_THROWS_WITH_AS(conv2d_forward(in, k, Tensor4(), 1, 0),
                         doctest::Contains("(4,3,5,5)"), DimensionError);
}

TEST_CASE("conv2d: kernel larger than padded input raises") {
    Tensor4 in(1, 1, 3, 3);
    Tensor4 k(1, 1, 5, 5);
    CHECK_THROWS_AS(conv2d_forward(in, k, Tensor4(), 1, 0), DimensionError);
}

TEST_CASE("conv2d is linear with zero bias") {
    Rng rng(11);
    Tensor4 x = random_tensor(1, 2, 9, 9, rng);
    Tensor4 y = random_tensor(1, 2, 9, 9, rng);
    Tensor4 k = random_tensor(3, 2, 3, 3, rng);
    const double a = 0.7, b = -1.3;
    Tensor4 combo(1, 2, 9, 9);
    for (size_t i = 0; i < combo.size(); ++i) combo.data[i] = a * x.data[i] + b * y.data[i];
    Tensor4 lhs = conv2d_forward(combo, k, Tensor4(), 1, 0);
    Tensor4 cx = conv2d_forward(x, k, Tensor4(), 1, 0);
    Tensor4 cy = conv2d_forward(y, k, Tensor4(), 1, 0);
    Tensor4 rhs = Tensor4::zeros_like(cx);
    for (size_t i = 0; i < rhs.size(); ++i) rhs.data[i] = a * cx.data[i] + b * cy.data[i];
    CHECK(max_rel_diff(lhs, rhs) < 1e-10);
}

TEST_CASE("deconv2d: single pixel scatters to v * K") {
    Tensor4 in(1, 1, 1, 1);
    in.data[0] = 2.5;
    Rng rng(3);
    Tensor4 k = random_tensor(1, 1, 3, 3, rng);
    Tensor4 out = deconv2d_forward(in, k, Tensor4(), 1, 0);
    REQUIRE(out.shape == std::array<int, 4>{1, 1, 3, 3});
    for (size_t i = 0; i < out.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(2.5 * k.data[i]).epsilon(1e-15));
}

TEST_CASE("deconv2d: shape round-trip 55 -> 51 -> 55 with k=5") {
    CHECK(conv_out_dim(55, 5, 1, 0) == 51);
    CHECK(deconv_out_dim(51, 5, 1, 0) == 55);
    Rng rng(5);
    Tensor4 x = random_tensor(1, 1, 55, 55, rng);
    Tensor4 k = random_tensor(4, 1, 5, 5, rng);
    Tensor4 kd = random_tensor(4, 1, 5, 5, rng);
    Tensor4 mid = conv2d_forward(x, k, Tensor4(), 1, 0);
    Tensor4 back = deconv2d_forward(mid, kd, Tensor4(), 1, 0);
    CHECK(back.h() == 55);
    CHECK(back.w() == 55);
}

TEST_CASE("deconv2d forward equals the adjoint of conv2d") {
    // <conv(x), y> == <x, deconv(y)> for matching hyperparameters
    Rng rng(17);
    for (auto [stride, pad] : {std::pair{1, 0}, {1, 2}, {2, 1}}) {
        Tensor4 x = random_tensor(2, 3, 9, 9, rng);
        Tensor4 k = random_tensor(4, 3, 3, 3, rng);
        Tensor4 cx = conv2d_forward(x, k, Tensor4(), stride, pad);
        Tensor4 y = random_tensor(cx.n(), cx.c(), cx.h(), cx.w(), rng);
        // view k (oc=4, ic=3, kh, kw) as a deconv kernel (in=4, out=3, kh, kw)
        Tensor4 dy = deconv2d_forward(y, k, Tensor4(), stride, pad);
        // deconv output may be larger than x when pad is small; adjoint holds
        // on the common support, which here is exactly x's shape
        REQUIRE(dy.shape == x.shape);
        CHECK(dot(cx, y) == doctest::Approx(dot(x, dy)).epsilon(1e-8));
    }
}

TEST_CASE("deconv2d matches the brute-force reference") {
    Rng rng(23);
    Tensor4 in = random_tensor(2, 4, 6, 7, rng);
    Tensor4 k = random_tensor(4, 3, 5, 5, rng);
    Tensor4 b = random_tensor(1, 3, 1, 1, rng);
    for (auto [stride, pad] : {std::pair{1, 0}, {1, 1}, {2, 1}}) {
        Tensor4 fast = deconv2d_forward(in, k, b, stride, pad);
        Tensor4 slow = serial::deconv2d_forward(in, k, b, stride, pad);
        REQUIRE(fast.shape == slow.shape);
        CHECK(max_rel_diff(fast, slow) < 1e-12);
    }
}

TEST_CASE("conv2d backward kernels match the brute-force reference") {
    Rng rng(31);
    Tensor4 in = random_tensor(2, 3, 9, 9, rng);
    Tensor4 k = random_tensor(4, 3, 3, 3, rng);
    for (auto [stride, pad] : {std::pair{1, 0}, {1, 1}, {2, 1}}) {
        Tensor4 out = conv2d_forward(in, k, Tensor4(), stride, pad);
        Tensor4 gout = random_tensor(out.n(), out.c(), out.h(), out.w(), rng);

        Tensor4 gi_fast = conv2d_backward_input(gout, k, stride, pad, in.h(), in.w());
        Tensor4 gi_slow = serial::conv2d_backward_input(gout, k, stride, pad, in.h(), in.w());
        CHECK(max_rel_diff(gi_fast, gi_slow) < 1e-12);

        Tensor4 gk_fast = conv2d_backward_kernel(gout, in, k.h(), k.w(), stride, pad);
        Tensor4 gk_slow = serial::conv2d_backward_kernel(gout, in, k.h(), k.w(), stride, pad);
        CHECK(max_rel_diff(gk_fast, gk_slow) < 1e-12);
    }
}

TEST_CASE("f32 compute mode tracks f64 within single precision") {
    Rng rng(61);
    Tensor4 in = random_tensor(2, 8, 20, 20, rng);
    Tensor4 k = random_tensor(8, 8, 5, 5, rng);
    Tensor4 b = random_tensor(1, 8, 1, 1, rng);
    Tensor4 hi = conv2d_forward(in, k, b, 1, 0, Precision::f64);
    Tensor4 lo = conv2d_forward(in, k, b, 1, 0, Precision::f32);
    CHECK(max_rel_diff(lo, hi) < 1e-4);
    // deterministic: two f32 runs agree bit-exactly
    Tensor4 lo2 = conv2d_forward(in, k, b, 1, 0, Precision::f32);
    CHECK(max_abs_diff(lo, lo2) == 0.0);
}

TEST_CASE("mse: trivial values") {
    Tensor4 a(1, 1, 1, 2), b(1, 1, 1, 2);
    a.data = {1.0, 1.0};
    b.data = {1.0, 1.0};
    CHECK(mse_forward(a, b) == 0.0);
    a.data = {2.0, 0.0};
    b.data = {0.0, 0.0};
    CHECK(mse_forward(a, b) == doctest::Approx(2.0).epsilon(1e-15));
    Tensor4 c(1, 1, 2, 2);
    CHECK_THROWS_AS(mse_forward(a, c), DimensionError);
}

TEST_CASE("relu masks negatives and zero") {
    Tensor4 x(1, 1, 1, 4);
    x.data = {-1.0, 0.0, 0.5, 2.0};
    Tensor4 y = relu_forward(x);
    CHECK(y.data == std::vector<double>{0.0, 0.0, 0.5, 2.0});
    Tensor4 g(1, 1, 1, 4);
    g.fill(1.0);
    Tensor4 gx = relu_backward(g, x);
    CHECK(gx.data == std::vector<double>{0.0, 0.0, 1.0, 1.0});
}
