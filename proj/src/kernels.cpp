#include "qzo/kernels.hpp"

#include <limits>
#include <stdexcept>

#include "qzo/qtensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qzo::kernels {

namespace {

constexpr int64_t kI32Min = std::numeric_limits<int32_t>::min();
constexpr int64_t kI32Max = std::numeric_limits<int32_t>::max();

inline int32_t narrow_checked(int64_t v, bool& overflow) {
    if (v < kI32Min || v > kI32Max) {
        overflow = true;
        return 0;
    }
    return static_cast<int32_t>(v);
}

[[noreturn]] void throw_overflow(const char* kernel) {
    throw std::overflow_error(std::string(kernel) + ": 32-bit accumulator overflow");
}

inline int64_t fc_one(std::span<const int32_t> x, std::span<const int32_t> w,
                      std::span<const int32_t> bias, int in_dim, int s, int o) {
    int64_t acc = bias.empty() ? 0 : bias[static_cast<size_t>(o)];
    const int32_t* xr = x.data() + static_cast<int64_t>(s) * in_dim;
    const int32_t* wr = w.data() + static_cast<int64_t>(o) * in_dim;
    for (int i = 0; i < in_dim; ++i) {
        acc += static_cast<int64_t>(xr[i]) * wr[i];
    }
    return acc;
}

inline int64_t conv_one(std::span<const int32_t> x, std::span<const int32_t> w,
                        std::span<const int32_t> bias, const ConvGeom& g, int s,
                        int co, int oy, int ox) {
    int64_t acc = bias.empty() ? 0 : bias[static_cast<size_t>(co)];
    const int64_t xbase = static_cast<int64_t>(s) * g.in_ch * g.in_h * g.in_w;
    const int64_t wbase = static_cast<int64_t>(co) * g.in_ch * g.kh * g.kw;
    for (int ci = 0; ci < g.in_ch; ++ci) {
        for (int ky = 0; ky < g.kh; ++ky) {
            const int iy = oy * g.stride + ky - g.pad;
            if (iy < 0 || iy >= g.in_h) continue;
            for (int kx = 0; kx < g.kw; ++kx) {
                const int ix = ox * g.stride + kx - g.pad;
                if (ix < 0 || ix >= g.in_w) continue;
                const int64_t xi = xbase + (static_cast<int64_t>(ci) * g.in_h + iy) * g.in_w + ix;
                const int64_t wi = wbase + (static_cast<int64_t>(ci) * g.kh + ky) * g.kw + kx;
                acc += static_cast<int64_t>(x[static_cast<size_t>(xi)]) * w[static_cast<size_t>(wi)];
            }
        }
    }
    return acc;
}

inline int64_t dwconv_one(std::span<const int32_t> x, std::span<const int32_t> w,
                          std::span<const int32_t> bias, const ConvGeom& g, int s,
                          int c, int oy, int ox) {
    int64_t acc = bias.empty() ? 0 : bias[static_cast<size_t>(c)];
    const int64_t xbase = (static_cast<int64_t>(s) * g.in_ch + c) * g.in_h * g.in_w;
    const int64_t wbase = static_cast<int64_t>(c) * g.kh * g.kw;
    for (int ky = 0; ky < g.kh; ++ky) {
        const int iy = oy * g.stride + ky - g.pad;
        if (iy < 0 || iy >= g.in_h) continue;
        for (int kx = 0; kx < g.kw; ++kx) {
            const int ix = ox * g.stride + kx - g.pad;
            if (ix < 0 || ix >= g.in_w) continue;
            acc += static_cast<int64_t>(x[static_cast<size_t>(xbase + static_cast<int64_t>(iy) * g.in_w + ix)]) *
                   w[static_cast<size_t>(wbase + static_cast<int64_t>(ky) * g.kw + kx)];
        }
    }
    return acc;
}

}  // namespace

bool openmp_enabled() {
#ifdef _OPENMP
    return omp_get_max_threads() > 1;
#else
    return false;
#endif
}

void fc_acc_serial(std::span<const int32_t> x, std::span<const int32_t> w,
                   std::span<const int32_t> bias, int n, int in_dim, int out_dim,
                   std::span<int32_t> acc) {
    bool overflow = false;
    for (int s = 0; s < n; ++s) {
        for (int o = 0; o < out_dim; ++o) {
            acc[static_cast<size_t>(static_cast<int64_t>(s) * out_dim + o)] =
                narrow_checked(fc_one(x, w, bias, in_dim, s, o), overflow);
        }
    }
    if (overflow) throw_overflow("fc");
}

void fc_acc_omp(std::span<const int32_t> x, std::span<const int32_t> w,
                std::span<const int32_t> bias, int n, int in_dim, int out_dim,
                std::span<int32_t> acc) {
    bool overflow = false;
    const int64_t total = static_cast<int64_t>(n) * out_dim;
#pragma omp parallel for reduction(|| : overflow) schedule(static)
    for (int64_t idx = 0; idx < total; ++idx) {
        const int s = static_cast<int>(idx / out_dim);
        const int o = static_cast<int>(idx % out_dim);
        acc[static_cast<size_t>(idx)] =
            narrow_checked(fc_one(x, w, bias, in_dim, s, o), overflow);
    }
    if (overflow) throw_overflow("fc");
}

void fc_acc(std::span<const int32_t> x, std::span<const int32_t> w,
            std::span<const int32_t> bias, int n, int in_dim, int out_dim,
            std::span<int32_t> acc) {
#ifdef _OPENMP
    fc_acc_omp(x, w, bias, n, in_dim, out_dim, acc);
#else
    fc_acc_serial(x, w, bias, n, in_dim, out_dim, acc);
#endif
}

void conv2d_acc_serial(std::span<const int32_t> x, std::span<const int32_t> w,
                       std::span<const int32_t> bias, int n, const ConvGeom& g,
                       std::span<int32_t> acc) {
    bool overflow = false;
    int64_t idx = 0;
    for (int s = 0; s < n; ++s) {
        for (int co = 0; co < g.out_ch; ++co) {
            for (int oy = 0; oy < g.out_h; ++oy) {
                for (int ox = 0; ox < g.out_w; ++ox) {
                    acc[static_cast<size_t>(idx++)] =
                        narrow_checked(conv_one(x, w, bias, g, s, co, oy, ox), overflow);
                }
            }
        }
    }
    if (overflow) throw_overflow("conv2d");
}

void conv2d_acc_omp(std::span<const int32_t> x, std::span<const int32_t> w,
                    std::span<const int32_t> bias, int n, const ConvGeom& g,
                    std::span<int32_t> acc) {
    bool overflow = false;
    const int64_t per_sample = static_cast<int64_t>(g.out_ch) * g.out_h * g.out_w;
    const int64_t total = n * per_sample;
#pragma omp parallel for reduction(|| : overflow) schedule(static)
    for (int64_t idx = 0; idx < total; ++idx) {
        const int s = static_cast<int>(idx / per_sample);
        int64_t r = idx % per_sample;
        const int co = static_cast<int>(r / (g.out_h * g.out_w));
        r %= static_cast<int64_t>(g.out_h) * g.out_w;
        const int oy = static_cast<int>(r / g.out_w);
        const int ox = static_cast<int>(r % g.out_w);
        acc[static_cast<size_t>(idx)] =
            narrow_checked(conv_one(x, w, bias, g, s, co, oy, ox), overflow);
    }
    if (overflow) throw_overflow("conv2d");
}

void conv2d_acc(std::span<const int32_t> x, std::span<const int32_t> w,
                std::span<const int32_t> bias, int n, const ConvGeom& g,
                std::span<int32_t> acc) {
#ifdef _OPENMP
    conv2d_acc_omp(x, w, bias, n, g, acc);
#else
    conv2d_acc_serial(x, w, bias, n, g, acc);
#endif
}

void dwconv2d_acc_serial(std::span<const int32_t> x, std::span<const int32_t> w,
                         std::span<const int32_t> bias, int n, const ConvGeom& g,
                         std::span<int32_t> acc) {
    bool overflow = false;
    int64_t idx = 0;
    for (int s = 0; s < n; ++s) {
        for (int c = 0; c < g.out_ch; ++c) {
            for (int oy = 0; oy < g.out_h; ++oy) {
                for (int ox = 0; ox < g.out_w; ++ox) {
                    acc[static_cast<size_t>(idx++)] =
                        narrow_checked(dwconv_one(x, w, bias, g, s, c, oy, ox), overflow);
                }
            }
        }
    }
    if (overflow) throw_overflow("dwconv2d");
}

void dwconv2d_acc_omp(std::span<const int32_t> x, std::span<const int32_t> w,
                      std::span<const int32_t> bias, int n, const ConvGeom& g,
                      std::span<int32_t> acc) {
    bool overflow = false;
    const int64_t per_sample = static_cast<int64_t>(g.out_ch) * g.out_h * g.out_w;
    const int64_t total = n * per_sample;
#pragma omp parallel for reduction(|| : overflow) schedule(static)
    for (int64_t idx = 0; idx < total; ++idx) {
        const int s = static_cast<int>(idx / per_sample);
        int64_t r = idx % per_sample;
        const int c = static_cast<int>(r / (g.out_h * g.out_w));
        r %= static_cast<int64_t>(g.out_h) * g.out_w;
        const int oy = static_cast<int>(r / g.out_w);
        const int ox = static_cast<int>(r % g.out_w);
        acc[static_cast<size_t>(idx)] =
            narrow_checked(dwconv_one(x, w, bias, g, s, c, oy, ox), overflow);
    }
    if (overflow) throw_overflow("dwconv2d");
}

void dwconv2d_acc(std::span<const int32_t> x, std::span<const int32_t> w,
                  std::span<const int32_t> bias, int n, const ConvGeom& g,
                  std::span<int32_t> acc) {
#ifdef _OPENMP
    dwconv2d_acc_omp(x, w, bias, n, g, acc);
#else
    dwconv2d_acc_serial(x, w, bias, n, g, acc);
#endif
}

void gap_sum_serial(std::span<const int32_t> x, int n, int ch, int h, int w,
                    std::span<int32_t> acc) {
    bool overflow = false;
    const int64_t hw = static_cast<int64_t>(h) * w;
    for (int s = 0; s < n; ++s) {
        for (int c = 0; c < ch; ++c) {
            const int32_t* base = x.data() + (static_cast<int64_t>(s) * ch + c) * hw;
            int64_t sum = 0;
            for (int64_t i = 0; i < hw; ++i) sum += base[i];
            acc[static_cast<size_t>(static_cast<int64_t>(s) * ch + c)] =
                narrow_checked(sum, overflow);
        }
    }
    if (overflow) throw_overflow("gap");
}

void gap_sum_omp(std::span<const int32_t> x, int n, int ch, int h, int w,
                 std::span<int32_t> acc) {
    bool overflow = false;
    const int64_t hw = static_cast<int64_t>(h) * w;
    const int64_t total = static_cast<int64_t>(n) * ch;
#pragma omp parallel for reduction(|| : overflow) schedule(static)
    for (int64_t idx = 0; idx < total; ++idx) {
        const int32_t* base = x.data() + idx * hw;
        int64_t sum = 0;
        for (int64_t i = 0; i < hw; ++i) sum += base[i];
        acc[static_cast<size_t>(idx)] = narrow_checked(sum, overflow);
    }
    if (overflow) throw_overflow("gap");
}

void gap_sum(std::span<const int32_t> x, int n, int ch, int h, int w,
             std::span<int32_t> acc) {
#ifdef _OPENMP
    gap_sum_omp(x, n, ch, h, w, acc);
#else
    gap_sum_serial(x, n, ch, h, w, acc);
#endif
}

void requantize(std::span<const int32_t> acc, double factor, int64_t lo, int64_t hi,
                bool relu, std::span<int32_t> out) {
    for (size_t i = 0; i < acc.size(); ++i) {
        int64_t q = round_half_away(static_cast<double>(acc[i]) * factor);
        if (q < lo) q = lo;
        if (q > hi) q = hi;
        if (relu && q < 0) q = 0;
        out[i] = static_cast<int32_t>(q);
    }
}

}  // namespace qzo::kernels
