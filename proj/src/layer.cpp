#include "qzo/layer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace qzo {

namespace {

constexpr int64_t kQN8 = 128, kQP8 = 127;

[[noreturn]] void fail(int layer_index, const std::string& msg) {
    throw std::invalid_argument("layer " + std::to_string(layer_index) + ": " + msg);
}

}  // namespace

kernels::ConvGeom LayerSpec::geom() const {
    kernels::ConvGeom g;
    g.in_ch = in_ch;
    g.in_h = in_h;
    g.in_w = in_w;
    g.out_ch = out_ch;
    g.out_h = out_h;
    g.out_w = out_w;
    g.kh = kh;
    g.kw = kw;
    g.stride = stride;
    g.pad = pad;
    return g;
}

double LayerSpec::requant_factor() const {
    if (kind == LayerKind::GlobalAvgPool) {
        return static_cast<double>(s_x) /
               (static_cast<double>(s_z) * static_cast<double>(in_h) * in_w);
    }
    return static_cast<double>(s_w) * s_x / s_z;
}

int64_t LayerSpec::forward_macs() const {
    switch (kind) {
        case LayerKind::FullyConnected:
            return static_cast<int64_t>(in_ch) * out_ch;
        case LayerKind::Conv2d:
            return static_cast<int64_t>(out_ch) * out_h * out_w * in_ch * kh * kw;
        case LayerKind::DepthwiseConv2d:
            return static_cast<int64_t>(out_ch) * out_h * out_w * kh * kw;
        case LayerKind::GlobalAvgPool:
            return 0;  // additions only
    }
    return 0;
}

void validate_layer(const LayerSpec& layer, int layer_index) {
    if (!(layer.s_w > 0 && layer.s_x > 0 && layer.s_z > 0)) {
        fail(layer_index, "scales must be positive");
    }
    if (layer.in_ch <= 0 || layer.out_ch <= 0 || layer.in_h <= 0 || layer.in_w <= 0 ||
        layer.out_h <= 0 || layer.out_w <= 0) {
        fail(layer_index, "non-positive dimension");
    }
    switch (layer.kind) {
        case LayerKind::FullyConnected:
            if (layer.weights.size() != static_cast<int64_t>(layer.out_ch) * layer.in_ch) {
                fail(layer_index, "fc weight shape mismatch");
            }
            break;
        case LayerKind::Conv2d:
            if (layer.weights.size() !=
                static_cast<int64_t>(layer.out_ch) * layer.in_ch * layer.kh * layer.kw) {
                fail(layer_index, "conv weight shape mismatch");
            }
            break;
        case LayerKind::DepthwiseConv2d:
            if (layer.out_ch != layer.in_ch) fail(layer_index, "depthwise channel mismatch");
            if (layer.weights.size() !=
                static_cast<int64_t>(layer.out_ch) * layer.kh * layer.kw) {
                fail(layer_index, "depthwise weight shape mismatch");
            }
            break;
        case LayerKind::GlobalAvgPool:
            if (layer.weights.size() != 0 || layer.bias.size() != 0) {
                fail(layer_index, "pooling layer carries parameters");
            }
            if (layer.out_h != 1 || layer.out_w != 1 || layer.out_ch != layer.in_ch) {
                fail(layer_index, "pooling output shape must be [C,1,1]");
            }
            break;
    }
    if (layer.has_params() && !layer.bias.data.empty() &&
        layer.bias.size() != layer.out_ch) {
        fail(layer_index, "bias shape mismatch");
    }
}

static void check_input(const LayerSpec& layer, const QTensor& x, int n) {
    if (x.size() != static_cast<int64_t>(n) * layer.in_elems()) {
        throw std::invalid_argument("layer input shape mismatch");
    }
    if (x.scale != layer.s_x) {
        throw std::invalid_argument("layer input scale does not match s_x");
    }
}

QTensor layer_preact(const LayerSpec& layer, const QTensor& x, int n) {
    check_input(layer, x, n);
    if (!layer.has_preact()) {
        throw std::invalid_argument("layer has no pre-activation");
    }
    std::vector<int32_t> acc(static_cast<size_t>(n) * layer.d_a());
    switch (layer.kind) {
        case LayerKind::FullyConnected:
            kernels::fc_acc(x.data, layer.weights.data, layer.bias.data, n,
                            layer.in_ch, layer.out_ch, acc);
            break;
        case LayerKind::Conv2d:
            kernels::conv2d_acc(x.data, layer.weights.data, layer.bias.data, n,
                                layer.geom(), acc);
            break;
        case LayerKind::DepthwiseConv2d:
            kernels::dwconv2d_acc(x.data, layer.weights.data, layer.bias.data, n,
                                  layer.geom(), acc);
            break;
        default:
            break;
    }
    QTensor z;
    z.shape = layer.out_shape(n);
    z.scale = layer.s_z;
    z.bitwidth = 8;
    z.is_signed = true;
    z.data.resize(acc.size());
    kernels::requantize(acc, layer.requant_factor(), -kQN8, kQP8, false, z.data);
    return z;
}

QTensor apply_activation(const LayerSpec& layer, const QTensor& z) {
    QTensor a = z;
    if (layer.act == Activation::Relu) {
        for (auto& v : a.data) {
            if (v < 0) v = 0;
        }
    }
    return a;
}

QTensor q_layer_forward(const LayerSpec& layer, const QTensor& x, int n) {
    if (layer.kind == LayerKind::GlobalAvgPool) {
        check_input(layer, x, n);
        std::vector<int32_t> acc(static_cast<size_t>(n) * layer.in_ch);
        kernels::gap_sum(x.data, n, layer.in_ch, layer.in_h, layer.in_w, acc);
        QTensor out;
        out.shape = layer.out_shape(n);
        out.scale = layer.s_z;
        out.bitwidth = 8;
        out.is_signed = true;
        out.data.resize(acc.size());
        kernels::requantize(acc, layer.requant_factor(), -kQN8, kQP8,
                            layer.act == Activation::Relu, out.data);
        return out;
    }
    return apply_activation(layer, layer_preact(layer, x, n));
}

}  // namespace qzo
