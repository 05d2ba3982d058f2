#pragma once

#include <cstdint>
#include <vector>

#include "qzo/kernels.hpp"
#include "qzo/qtensor.hpp"

namespace qzo {

enum class LayerKind : uint8_t {
    FullyConnected = 0,
    Conv2d = 1,
    DepthwiseConv2d = 2,
    GlobalAvgPool = 3,
};

enum class Activation : uint8_t { Identity = 0, Relu = 1 };

// One quantized layer. Weights hold 8-bit values (stored widened in int32),
// bias holds 32-bit values at scale s_w * s_x so the whole accumulation is
// pure integer arithmetic.
struct LayerSpec {
    LayerKind kind = LayerKind::FullyConnected;
    Activation act = Activation::Identity;

    int in_ch = 0, in_h = 1, in_w = 1;
    int out_ch = 0, out_h = 1, out_w = 1;
    int kh = 1, kw = 1, stride = 1, pad = 0;

    QTensor weights;  // empty for pooling
    QTensor bias;     // empty for pooling
    float s_w = 1.0f, s_x = 1.0f, s_z = 1.0f;

    bool frozen = false;

    bool has_params() const { return kind != LayerKind::GlobalAvgPool; }
    bool has_preact() const { return kind != LayerKind::GlobalAvgPool; }
    bool trainable() const { return has_params() && !frozen; }

    // Trainable-parameter count (weights + bias) and output-node count per
    // sample; the dimensions governing estimator variance and mode choice.
    int64_t d_w() const { return weights.size() + bias.size(); }
    int64_t d_a() const { return static_cast<int64_t>(out_ch) * out_h * out_w; }

    int64_t in_elems() const { return static_cast<int64_t>(in_ch) * in_h * in_w; }
    int64_t forward_macs() const;

    kernels::ConvGeom geom() const;
    double requant_factor() const;  // s_w * s_x / s_z (s_x / (HW * s_z) for pooling)

    std::vector<int> out_shape(int n) const { return {n, out_ch, out_h, out_w}; }
};

void validate_layer(const LayerSpec& layer, int layer_index);

// Requantized pre-activation z for a batch of n samples:
// z = clip(round((W (*) x + b) * s_w s_x / s_z), -Q_N, Q_P).
// x must carry the layer's s_x. Activation is NOT applied.
QTensor layer_preact(const LayerSpec& layer, const QTensor& x, int n);

// Elementwise activation on quantized values. Tolerates the widened range
// produced by node perturbation (no clipping).
QTensor apply_activation(const LayerSpec& layer, const QTensor& z);

// Full layer forward: activation(preact(x)). Pooling kinds average in
// integers and requantize.
QTensor q_layer_forward(const LayerSpec& layer, const QTensor& x, int n);

}  // namespace qzo
