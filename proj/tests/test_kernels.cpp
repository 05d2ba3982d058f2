#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <vector>

#include "qzo/kernels.hpp"

using namespace qzo::kernels;

namespace {

std::vector<int32_t> rnd(size_t n, int lo, int hi, uint32_t seed) {
    std::mt19937 gen(seed);
    std::uniform_int_distribution<int32_t> d(lo, hi);
    std::vector<int32_t> v(n);
    for (auto& x : v) x = d(gen);
    return v;
}

}  // namespace

TEST_CASE("fc serial matches independent int64 reference and omp variant") {
    std::mt19937 gen(11);
    for (int rep = 0; rep < 50; ++rep) {
        const int n = 1 + static_cast<int>(gen() % 5);
        const int in = 1 + static_cast<int>(gen() % 17);
        const int out = 1 + static_cast<int>(gen() % 9);
        const auto x = rnd(static_cast<size_t>(n) * in, -128, 127, gen());
        const auto w = rnd(static_cast<size_t>(out) * in, -128, 127, gen());
        const auto b = rnd(static_cast<size_t>(out), -1000, 1000, gen());
        std::vector<int32_t> acc_s(static_cast<size_t>(n) * out);
        std::vector<int32_t> acc_p(acc_s.size());
        fc_acc_serial(x, w, b, n, in, out, acc_s);
        fc_acc_omp(x, w, b, n, in, out, acc_p);
        CHECK(acc_s == acc_p);
        for (int s = 0; s < n; ++s) {
            for (int o = 0; o < out; ++o) {
                int64_t ref = b[static_cast<size_t>(o)];
                for (int i = 0; i < in; ++i) {
                    ref += static_cast<int64_t>(x[static_cast<size_t>(s) * in + i]) *
                           w[static_cast<size_t>(o) * in + i];
                }
                CHECK(acc_s[static_cast<size_t>(s) * out + o] == ref);
            }
        }
    }
}

TEST_CASE("conv2d serial == omp on random geometries") {
    std::mt19937 gen(22);
    for (int rep = 0; rep < 25; ++rep) {
        ConvGeom g;
        g.in_ch = 1 + static_cast<int>(gen() % 4);
        g.in_h = 3 + static_cast<int>(gen() % 6);
        g.in_w = 3 + static_cast<int>(gen() % 6);
        g.out_ch = 1 + static_cast<int>(gen() % 4);
        g.kh = 1 + static_cast<int>(gen() % 3);
        g.kw = 1 + static_cast<int>(gen() % 3);
        g.stride = 1 + static_cast<int>(gen() % 2);
        g.pad = static_cast<int>(gen() % 2);
        g.out_h = (g.in_h + 2 * g.pad - g.kh) / g.stride + 1;
        g.out_w = (g.in_w + 2 * g.pad - g.kw) / g.stride + 1;
        if (g.out_h < 1 || g.out_w < 1) continue;
        const int n = 1 + static_cast<int>(gen() % 3);
        const auto x = rnd(static_cast<size_t>(n) * g.in_ch * g.in_h * g.in_w, -128, 127, gen());
        const auto w = rnd(static_cast<size_t>(g.out_ch) * g.in_ch * g.kh * g.kw, -128, 127, gen());
        const auto b = rnd(static_cast<size_t>(g.out_ch), -500, 500, gen());
        std::vector<int32_t> acc_s(static_cast<size_t>(n) * g.out_ch * g.out_h * g.out_w);
        std::vector<int32_t> acc_p(acc_s.size());
        conv2d_acc_serial(x, w, b, n, g, acc_s);
        conv2d_acc_omp(x, w, b, n, g, acc_p);
        CHECK(acc_s == acc_p);
    }
}

TEST_CASE("dwconv2d serial == omp and channel independence") {
    ConvGeom g;
    g.in_ch = 3;
    g.in_h = 5;
    g.in_w = 5;
    g.out_ch = 3;
    g.kh = 3;
    g.kw = 3;
    g.stride = 1;
    g.pad = 1;
    g.out_h = 5;
    g.out_w = 5;
    const int n = 2;
    const auto x = rnd(static_cast<size_t>(n) * g.in_ch * g.in_h * g.in_w, -128, 127, 7);
    const auto w = rnd(static_cast<size_t>(g.in_ch) * g.kh * g.kw, -128, 127, 8);
    const auto b = rnd(static_cast<size_t>(g.in_ch), -100, 100, 9);
    std::vector<int32_t> acc_s(static_cast<size_t>(n) * g.out_ch * g.out_h * g.out_w);
    std::vector<int32_t> acc_p(acc_s.size());
    dwconv2d_acc_serial(x, w, b, n, g, acc_s);
    dwconv2d_acc_omp(x, w, b, n, g, acc_p);
    CHECK(acc_s == acc_p);

    // Zeroing channel 2's input zeroes only channel 2's accumulation (minus bias).
    auto x2 = x;
    for (int s = 0; s < n; ++s) {
        for (int p = 0; p < g.in_h * g.in_w; ++p) {
            x2[static_cast<size_t>((s * g.in_ch + 2) * g.in_h * g.in_w + p)] = 0;
        }
    }
    std::vector<int32_t> acc_z(acc_s.size());
    dwconv2d_acc_serial(x2, w, b, n, g, acc_z);
    for (int s = 0; s < n; ++s) {
        for (int c = 0; c < 2; ++c) {
            for (int p = 0; p < g.out_h * g.out_w; ++p) {
                const size_t i = static_cast<size_t>((s * g.out_ch + c) * g.out_h * g.out_w + p);
                CHECK(acc_z[i] == acc_s[i]);
            }
        }
        for (int p = 0; p < g.out_h * g.out_w; ++p) {
            CHECK(acc_z[static_cast<size_t>((s * g.out_ch + 2) * g.out_h * g.out_w + p)] == b[2]);
        }
    }
}

TEST_CASE("gap_sum serial == omp == reference") {
    const int n = 3, c = 4, h = 6, w = 5;
    const auto x = rnd(static_cast<size_t>(n) * c * h * w, -128, 127, 10);
    std::vector<int32_t> acc_s(static_cast<size_t>(n) * c), acc_p(acc_s.size());
    gap_sum_serial(x, n, c, h, w, acc_s);
    gap_sum_omp(x, n, c, h, w, acc_p);
    CHECK(acc_s == acc_p);
    for (int s = 0; s < n; ++s) {
        for (int ch = 0; ch < c; ++ch) {
            int64_t ref = 0;
            for (int p = 0; p < h * w; ++p) {
                ref += x[static_cast<size_t>((s * c + ch) * h * w + p)];
            }
            CHECK(acc_s[static_cast<size_t>(s * c + ch)] == ref);
        }
    }
}

TEST_CASE("accumulator overflow throws instead of wrapping") {
    // 130 values of 127*127 each stay in range; force overflow with wide bias.
    const int n = 1, in = 2, out = 1;
    const std::vector<int32_t> x = {127, 127};
    const std::vector<int32_t> w = {127, 127};
    const std::vector<int32_t> b = {INT32_MAX - 100};
    std::vector<int32_t> acc(1);
    CHECK_THROWS_AS(fc_acc_serial(x, w, b, n, in, out, acc), std::overflow_error);
    CHECK_THROWS_AS(fc_acc_omp(x, w, b, n, in, out, acc), std::overflow_error);
}

TEST_CASE("requantize rounding, clipping, relu") {
    const std::vector<int32_t> acc = {10, -10, 301, -301, 5};
    std::vector<int32_t> out(acc.size());
    requantize(acc, 1.0, -128, 127, false, out);
    CHECK(out == std::vector<int32_t>{10, -10, 127, -128, 5});
    requantize(acc, 0.05, -128, 127, false, out);
    // 10*0.05=0.5 -> 1 (ties away), -10*0.05=-0.5 -> -1
    CHECK(out[0] == 1);
    CHECK(out[1] == -1);
    requantize(acc, 1.0, -128, 127, true, out);
    CHECK(out == std::vector<int32_t>{10, 0, 127, 0, 5});
}
