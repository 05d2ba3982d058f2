#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "qzo/kernels.hpp"

using namespace qzo::kernels;

namespace {

using Clock = std::chrono::steady_clock;

std::vector<int32_t> random_int8(size_t n, uint32_t seed) {
    std::mt19937 gen(seed);
    std::uniform_int_distribution<int32_t> d(-128, 127);
    std::vector<int32_t> v(n);
    for (auto& x : v) x = d(gen);
    return v;
}

template <typename F>
double time_ms(F&& f, int reps) {
    f();  // warm-up
    const auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) f();
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / reps;
}

void report(const char* name, double serial_ms, double omp_ms) {
    std::printf("%-28s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx\n", name,
                serial_ms, omp_ms, serial_ms / omp_ms);
}

}  // namespace

int main() {
    std::printf("openmp_enabled: %s\n\n", openmp_enabled() ? "yes" : "no");

    {
        const int n = 32, in = 1024, out = 1024;
        const auto x = random_int8(static_cast<size_t>(n) * in, 1);
        const auto w = random_int8(static_cast<size_t>(out) * in, 2);
        const auto b = random_int8(out, 3);
        std::vector<int32_t> acc(static_cast<size_t>(n) * out);
        const double ts = time_ms([&] { fc_acc_serial(x, w, b, n, in, out, acc); }, 20);
        const double tp = time_ms([&] { fc_acc_omp(x, w, b, n, in, out, acc); }, 20);
        report("fc 32x1024x1024", ts, tp);
    }
    {
        ConvGeom g;
        g.in_ch = 32; g.in_h = 32; g.in_w = 32;
        g.out_ch = 64; g.kh = 3; g.kw = 3; g.stride = 1; g.pad = 1;
        g.out_h = 32; g.out_w = 32;
        const int n = 8;
        const auto x = random_int8(static_cast<size_t>(n) * g.in_ch * g.in_h * g.in_w, 4);
        const auto w = random_int8(static_cast<size_t>(g.out_ch) * g.in_ch * g.kh * g.kw, 5);
        const auto b = random_int8(g.out_ch, 6);
        std::vector<int32_t> acc(static_cast<size_t>(n) * g.out_ch * g.out_h * g.out_w);
        const double ts = time_ms([&] { conv2d_acc_serial(x, w, b, n, g, acc); }, 5);
        const double tp = time_ms([&] { conv2d_acc_omp(x, w, b, n, g, acc); }, 5);
        report("conv 8x32x32x32 3x3x64", ts, tp);
    }
    {
        ConvGeom g;
        g.in_ch = 128; g.in_h = 64; g.in_w = 64;
        g.out_ch = 128; g.kh = 3; g.kw = 3; g.stride = 1; g.pad = 1;
        g.out_h = 64; g.out_w = 64;
        const int n = 8;
        const auto x = random_int8(static_cast<size_t>(n) * g.in_ch * g.in_h * g.in_w, 7);
        const auto w = random_int8(static_cast<size_t>(g.in_ch) * g.kh * g.kw, 8);
        const auto b = random_int8(g.in_ch, 9);
        std::vector<int32_t> acc(static_cast<size_t>(n) * g.out_ch * g.out_h * g.out_w);
        const double ts = time_ms([&] { dwconv2d_acc_serial(x, w, b, n, g, acc); }, 10);
        const double tp = time_ms([&] { dwconv2d_acc_omp(x, w, b, n, g, acc); }, 10);
        report("dwconv 8x128x64x64 3x3", ts, tp);
    }
    {
        const int n = 64, c = 256, h = 32, w = 32;
        const auto x = random_int8(static_cast<size_t>(n) * c * h * w, 10);
        std::vector<int32_t> acc(static_cast<size_t>(n) * c);
        const double ts = time_ms([&] { gap_sum_serial(x, n, c, h, w, acc); }, 20);
        const double tp = time_ms([&] { gap_sum_omp(x, n, c, h, w, acc); }, 20);
        report("gap 64x256x32x32", ts, tp);
    }
    return 0;
}
