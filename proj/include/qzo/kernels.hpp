#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace qzo::kernels {

// Geometry of a conv / depthwise-conv window.
struct ConvGeom {
    int in_ch = 0, in_h = 0, in_w = 0;
    int out_ch = 0, out_h = 0, out_w = 0;
    int kh = 1, kw = 1;
    int stride = 1, pad = 0;
};

// Integer accumulation kernels. Inputs are integer-valued tensors; every
// product and sum is exact. Accumulators are checked against the signed
// 32-bit range and overflow throws std::overflow_error (no wraparound).
// Each kernel has a serial reference and an OpenMP variant; they produce
// identical results (pure integer arithmetic). The *_acc entry points
// dispatch to the OpenMP variant when available.

// Fully connected: x [N, in], w [out, in], bias [out] (optional, may be
// empty). Output acc [N, out].
void fc_acc_serial(std::span<const int32_t> x, std::span<const int32_t> w,
                   std::span<const int32_t> bias, int n, int in_dim, int out_dim,
                   std::span<int32_t> acc);
void fc_acc_omp(std::span<const int32_t> x, std::span<const int32_t> w,
                std::span<const int32_t> bias, int n, int in_dim, int out_dim,
                std::span<int32_t> acc);
void fc_acc(std::span<const int32_t> x, std::span<const int32_t> w,
            std::span<const int32_t> bias, int n, int in_dim, int out_dim,
            std::span<int32_t> acc);

// Conv2d: x [N, Cin, H, W], w [Cout, Cin, kh, kw], bias [Cout].
// Output acc [N, Cout, OH, OW].
void conv2d_acc_serial(std::span<const int32_t> x, std::span<const int32_t> w,
                       std::span<const int32_t> bias, int n, const ConvGeom& g,
                       std::span<int32_t> acc);
void conv2d_acc_omp(std::span<const int32_t> x, std::span<const int32_t> w,
                    std::span<const int32_t> bias, int n, const ConvGeom& g,
                    std::span<int32_t> acc);
void conv2d_acc(std::span<const int32_t> x, std::span<const int32_t> w,
                std::span<const int32_t> bias, int n, const ConvGeom& g,
                std::span<int32_t> acc);

// Depthwise conv2d: x [N, C, H, W], w [C, kh, kw], bias [C].
// Output acc [N, C, OH, OW] (out_ch == in_ch).
void dwconv2d_acc_serial(std::span<const int32_t> x, std::span<const int32_t> w,
                         std::span<const int32_t> bias, int n, const ConvGeom& g,
                         std::span<int32_t> acc);
void dwconv2d_acc_omp(std::span<const int32_t> x, std::span<const int32_t> w,
                      std::span<const int32_t> bias, int n, const ConvGeom& g,
                      std::span<int32_t> acc);
void dwconv2d_acc(std::span<const int32_t> x, std::span<const int32_t> w,
                  std::span<const int32_t> bias, int n, const ConvGeom& g,
                  std::span<int32_t> acc);

// Global average pool: x [N, C, H, W] -> integer channel sums [N, C].
// The division by H*W happens during requantization.
void gap_sum_serial(std::span<const int32_t> x, int n, int ch, int h, int w,
                    std::span<int32_t> acc);
void gap_sum_omp(std::span<const int32_t> x, int n, int ch, int h, int w,
                 std::span<int32_t> acc);
void gap_sum(std::span<const int32_t> x, int n, int ch, int h, int w,
             std::span<int32_t> acc);

// z_i = clip(round(acc_i * factor), lo, hi), followed by optional ReLU.
void requantize(std::span<const int32_t> acc, double factor, int64_t lo, int64_t hi,
                bool relu, std::span<int32_t> out);

// True when the OpenMP variants actually run multithreaded.
bool openmp_enabled();

}  // namespace qzo::kernels
