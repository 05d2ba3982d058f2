#include "qzo/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <zlib.h>

namespace qzo {

int QModel::num_blocks() const {
    int k = 0;
    for (int b : block_of) k = std::max(k, b + 1);
    return k;
}

int64_t QModel::trainable_params() const {
    int64_t d = 0;
    for (const auto& l : layers) {
        if (l.trainable()) d += l.d_w();
    }
    return d;
}

std::vector<int> QModel::trainable_layers() const {
    std::vector<int> out;
    for (size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].trainable()) out.push_back(static_cast<int>(i));
    }
    return out;
}

void validate_model(const QModel& model) {
    if (model.layers.empty()) throw std::invalid_argument("model has no layers");
    if (model.block_of.size() != model.layers.size()) {
        throw std::invalid_argument("block map size mismatch");
    }
    for (size_t i = 0; i < model.layers.size(); ++i) {
        validate_layer(model.layers[i], static_cast<int>(i));
        if (i > 0 && model.layers[i].s_x != model.layers[i - 1].s_z) {
            throw std::invalid_argument("scale chain broken at layer " + std::to_string(i));
        }
        if (model.layers[i].has_params() != (model.block_of[i] >= 0)) {
            throw std::invalid_argument("block map inconsistent at layer " + std::to_string(i));
        }
    }
    const auto& first = model.layers.front();
    if (first.in_ch != model.in_ch || first.in_h != model.in_h || first.in_w != model.in_w) {
        throw std::invalid_argument("model input shape mismatch");
    }
    const auto& last = model.layers.back();
    if (last.d_a() != model.num_classes) {
        throw std::invalid_argument("final layer width does not match class count");
    }
}

void validate_batch(const QModel& model, const Batch& batch) {
    if (batch.labels.empty()) throw std::invalid_argument("empty batch");
    if (batch.inputs.size() !=
        static_cast<int64_t>(batch.n()) * model.in_ch * model.in_h * model.in_w) {
        throw std::invalid_argument("batch shape does not match model input");
    }
    for (int y : batch.labels) {
        if (y < 0 || y >= model.num_classes) {
            throw std::invalid_argument("label out of range: " + std::to_string(y));
        }
    }
}

double softmax_cross_entropy(const float* logits, int num_classes, int label) {
    double mx = logits[0];
    for (int c = 1; c < num_classes; ++c) mx = std::max(mx, static_cast<double>(logits[c]));
    double sum = 0.0;
    for (int c = 0; c < num_classes; ++c) sum += std::exp(static_cast<double>(logits[c]) - mx);
    return std::log(sum) - (static_cast<double>(logits[label]) - mx);
}

ForwardResult forward(const QModel& model, const Batch& batch) {
    validate_batch(model, batch);
    const int n = batch.n();
    QTensor acts = batch.inputs;
    for (const auto& layer : model.layers) {
        acts = q_layer_forward(layer, acts, n);
    }
    ForwardResult r;
    const int c = model.num_classes;
    r.logits.resize(static_cast<size_t>(n) * c);
    for (int64_t i = 0; i < acts.size(); ++i) {
        r.logits[static_cast<size_t>(i)] = acts.scale * static_cast<float>(acts.data[static_cast<size_t>(i)]);
    }
    r.losses.resize(static_cast<size_t>(n));
    for (int s = 0; s < n; ++s) {
        r.losses[static_cast<size_t>(s)] =
            softmax_cross_entropy(r.logits.data() + static_cast<int64_t>(s) * c, c,
                                  batch.labels[static_cast<size_t>(s)]);
    }
    return r;
}

std::vector<double> forward_from(const QModel& model, int first_layer,
                                 const QTensor& acts, const std::vector<int>& labels,
                                 int64_t* forward_evals) {
    const int n = static_cast<int>(labels.size());
    QTensor a = acts;
    for (size_t i = static_cast<size_t>(first_layer); i < model.layers.size(); ++i) {
        a = q_layer_forward(model.layers[i], a, n);
    }
    const int c = model.num_classes;
    std::vector<double> losses(static_cast<size_t>(n));
    std::vector<float> logits(static_cast<size_t>(c));
    for (int s = 0; s < n; ++s) {
        for (int j = 0; j < c; ++j) {
            logits[static_cast<size_t>(j)] =
                a.scale * static_cast<float>(a.data[static_cast<size_t>(static_cast<int64_t>(s) * c + j)]);
        }
        losses[static_cast<size_t>(s)] = softmax_cross_entropy(logits.data(), c, labels[static_cast<size_t>(s)]);
    }
    if (forward_evals) *forward_evals += n;
    return losses;
}

double forward_from_single(const QModel& model, int first_layer, const QTensor& act,
                           int label, int64_t* forward_evals) {
    return forward_from(model, first_layer, act, {label}, forward_evals)[0];
}

QTensor sample_slice(const QTensor& acts, int n_total, int n) {
    QTensor out;
    const int64_t per = acts.size() / n_total;
    out.data.assign(acts.data.begin() + static_cast<int64_t>(n) * per,
                    acts.data.begin() + static_cast<int64_t>(n + 1) * per);
    out.shape = acts.shape;
    out.shape[0] = 1;
    out.scale = acts.scale;
    out.bitwidth = acts.bitwidth;
    out.is_signed = acts.is_signed;
    return out;
}

// ---- floating-point mirror ----

FpModel dequantize_model(const QModel& model) {
    FpModel fp;
    fp.in_ch = model.in_ch;
    fp.in_h = model.in_h;
    fp.in_w = model.in_w;
    fp.num_classes = model.num_classes;
    for (const auto& l : model.layers) {
        FpLayer f;
        f.kind = l.kind;
        f.act = l.act;
        f.in_ch = l.in_ch;
        f.in_h = l.in_h;
        f.in_w = l.in_w;
        f.out_ch = l.out_ch;
        f.out_h = l.out_h;
        f.out_w = l.out_w;
        f.kh = l.kh;
        f.kw = l.kw;
        f.stride = l.stride;
        f.pad = l.pad;
        f.weights.resize(static_cast<size_t>(l.weights.size()));
        for (int64_t i = 0; i < l.weights.size(); ++i) {
            f.weights[static_cast<size_t>(i)] = l.s_w * static_cast<float>(l.weights.data[static_cast<size_t>(i)]);
        }
        f.bias.resize(static_cast<size_t>(l.bias.size()));
        for (int64_t i = 0; i < l.bias.size(); ++i) {
            f.bias[static_cast<size_t>(i)] =
                l.s_w * l.s_x * static_cast<float>(l.bias.data[static_cast<size_t>(i)]);
        }
        fp.layers.push_back(std::move(f));
    }
    return fp;
}

std::vector<float> fp_layer_preact(const FpLayer& layer, const std::vector<float>& x,
                                   int n) {
    const int64_t out_per = static_cast<int64_t>(layer.out_ch) * layer.out_h * layer.out_w;
    std::vector<float> z(static_cast<size_t>(n * out_per), 0.0f);
    switch (layer.kind) {
        case LayerKind::FullyConnected: {
            for (int s = 0; s < n; ++s) {
                for (int o = 0; o < layer.out_ch; ++o) {
                    double acc = layer.bias.empty() ? 0.0 : layer.bias[static_cast<size_t>(o)];
                    for (int i = 0; i < layer.in_ch; ++i) {
                        acc += static_cast<double>(layer.weights[static_cast<size_t>(o) * layer.in_ch + i]) *
                               x[static_cast<size_t>(s) * layer.in_ch + i];
                    }
                    z[static_cast<size_t>(s) * layer.out_ch + o] = static_cast<float>(acc);
                }
            }
            break;
        }
        case LayerKind::Conv2d:
        case LayerKind::DepthwiseConv2d: {
            const bool dw = layer.kind == LayerKind::DepthwiseConv2d;
            for (int s = 0; s < n; ++s) {
                for (int co = 0; co < layer.out_ch; ++co) {
                    for (int oy = 0; oy < layer.out_h; ++oy) {
                        for (int ox = 0; ox < layer.out_w; ++ox) {
                            double acc = layer.bias.empty() ? 0.0 : layer.bias[static_cast<size_t>(co)];
                            const int ci_lo = dw ? co : 0;
                            const int ci_hi = dw ? co + 1 : layer.in_ch;
                            for (int ci = ci_lo; ci < ci_hi; ++ci) {
                                for (int ky = 0; ky < layer.kh; ++ky) {
                                    const int iy = oy * layer.stride + ky - layer.pad;
                                    if (iy < 0 || iy >= layer.in_h) continue;
                                    for (int kx = 0; kx < layer.kw; ++kx) {
                                        const int ix = ox * layer.stride + kx - layer.pad;
                                        if (ix < 0 || ix >= layer.in_w) continue;
                                        const int64_t xi =
                                            ((static_cast<int64_t>(s) * layer.in_ch + ci) * layer.in_h + iy) *
                                                layer.in_w + ix;
                                        const int64_t wi =
                                            dw ? (static_cast<int64_t>(co) * layer.kh + ky) * layer.kw + kx
                                               : ((static_cast<int64_t>(co) * layer.in_ch + ci) * layer.kh + ky) *
                                                         layer.kw + kx;
                                        acc += static_cast<double>(layer.weights[static_cast<size_t>(wi)]) *
                                               x[static_cast<size_t>(xi)];
                                    }
                                }
                            }
                            const int64_t zi =
                                ((static_cast<int64_t>(s) * layer.out_ch + co) * layer.out_h + oy) * layer.out_w + ox;
                            z[static_cast<size_t>(zi)] = static_cast<float>(acc);
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::GlobalAvgPool:
            throw std::invalid_argument("pooling layer has no pre-activation");
    }
    return z;
}

std::vector<float> fp_layer_forward(const FpLayer& layer, const std::vector<float>& x,
                                    int n) {
    if (layer.kind == LayerKind::GlobalAvgPool) {
        const int hw = layer.in_h * layer.in_w;
        std::vector<float> out(static_cast<size_t>(n) * layer.in_ch);
        for (int s = 0; s < n; ++s) {
            for (int c = 0; c < layer.in_ch; ++c) {
                double acc = 0.0;
                const float* base = x.data() + (static_cast<int64_t>(s) * layer.in_ch + c) * hw;
                for (int i = 0; i < hw; ++i) acc += base[i];
                float v = static_cast<float>(acc / hw);
                if (layer.act == Activation::Relu && v < 0) v = 0;
                out[static_cast<size_t>(s) * layer.in_ch + c] = v;
            }
        }
        return out;
    }
    std::vector<float> z = fp_layer_preact(layer, x, n);
    if (layer.act == Activation::Relu) {
        for (auto& v : z) {
            if (v < 0) v = 0;
        }
    }
    return z;
}

FpForwardCache fp_forward(const FpModel& fp, const std::vector<float>& inputs, int n,
                          const std::vector<int>* labels) {
    FpForwardCache cache;
    cache.acts.push_back(inputs);
    cache.preacts.resize(fp.layers.size());
    std::vector<float> a = inputs;
    for (size_t i = 0; i < fp.layers.size(); ++i) {
        const auto& layer = fp.layers[i];
        if (layer.kind == LayerKind::GlobalAvgPool) {
            a = fp_layer_forward(layer, a, n);
        } else {
            cache.preacts[i] = fp_layer_preact(layer, a, n);
            a = cache.preacts[i];
            if (layer.act == Activation::Relu) {
                for (auto& v : a) {
                    if (v < 0) v = 0;
                }
            }
        }
        cache.acts.push_back(a);
    }
    cache.logits = a;
    if (labels) {
        cache.losses.resize(static_cast<size_t>(n));
        for (int s = 0; s < n; ++s) {
            cache.losses[static_cast<size_t>(s)] = softmax_cross_entropy(
                cache.logits.data() + static_cast<int64_t>(s) * fp.num_classes,
                fp.num_classes, (*labels)[static_cast<size_t>(s)]);
        }
    }
    return cache;
}

// ---- post-training quantization ----

static float symmetric_scale(float max_abs) {
    constexpr float kFloor = 1.0f / (1 << 20);
    const float s = max_abs / 127.0f;
    return s > kFloor ? s : kFloor;
}

static float max_abs(const std::vector<float>& v) {
    float m = 0.0f;
    for (float x : v) m = std::max(m, std::fabs(x));
    return m;
}

QModel ptq_calibrate(const FpModel& fp, const std::vector<float>& calib_inputs,
                     int calib_n) {
    if (calib_n <= 0 || calib_inputs.empty()) {
        throw std::invalid_argument("ptq_calibrate: empty calibration set");
    }
    FpForwardCache cache = fp_forward(fp, calib_inputs, calib_n);

    QModel model;
    model.in_ch = fp.in_ch;
    model.in_h = fp.in_h;
    model.in_w = fp.in_w;
    model.num_classes = fp.num_classes;

    float s_in = symmetric_scale(max_abs(calib_inputs));
    float s_x = s_in;
    for (size_t i = 0; i < fp.layers.size(); ++i) {
        const auto& f = fp.layers[i];
        LayerSpec l;
        l.kind = f.kind;
        l.act = f.act;
        l.in_ch = f.in_ch;
        l.in_h = f.in_h;
        l.in_w = f.in_w;
        l.out_ch = f.out_ch;
        l.out_h = f.out_h;
        l.out_w = f.out_w;
        l.kh = f.kh;
        l.kw = f.kw;
        l.stride = f.stride;
        l.pad = f.pad;
        l.s_x = s_x;
        // Output scale from the pre-activation range (pooling: output range).
        const std::vector<float>& zvals =
            f.kind == LayerKind::GlobalAvgPool ? cache.acts[i + 1] : cache.preacts[i];
        l.s_z = symmetric_scale(max_abs(zvals));
        if (f.kind != LayerKind::GlobalAvgPool) {
            l.s_w = symmetric_scale(max_abs(f.weights));
            std::vector<int> wshape = {static_cast<int>(f.weights.size())};
            l.weights = quantize(f.weights, wshape, l.s_w, 8, true);
            if (!f.bias.empty()) {
                std::vector<int> bshape = {static_cast<int>(f.bias.size())};
                l.bias = quantize(f.bias, bshape, l.s_w * l.s_x, 32, true);
            }
        }
        s_x = l.s_z;
        model.layers.push_back(std::move(l));
    }
    model.block_of.assign(model.layers.size(), -1);
    for (size_t i = 0; i < model.layers.size(); ++i) {
        if (model.layers[i].has_params()) model.block_of[i] = 0;
    }
    validate_model(model);
    return model;
}

// ---- block partition ----

std::vector<int> partition_blocks(const QModel& model, int k) {
    std::vector<int> param_layers;
    int64_t total = 0;
    for (size_t i = 0; i < model.layers.size(); ++i) {
        if (model.layers[i].has_params()) {
            param_layers.push_back(static_cast<int>(i));
            total += model.layers[i].d_w();
        }
    }
    if (k < 1 || static_cast<int>(param_layers.size()) < k) {
        throw std::invalid_argument("partition_blocks: fewer trainable layers than blocks");
    }
    std::vector<int> blocks(model.layers.size(), -1);
    int64_t remaining = total;
    size_t pos = 0;
    for (int b = 0; b < k; ++b) {
        const int blocks_left = k - b;
        const int layers_left = static_cast<int>(param_layers.size() - pos);
        const double target = static_cast<double>(remaining) / blocks_left;
        int64_t block_sum = 0;
        int taken = 0;
        while (pos < param_layers.size()) {
            const int64_t dw = model.layers[static_cast<size_t>(param_layers[pos])].d_w();
            const bool must_take = taken == 0;
            const bool last_block = b == k - 1;
            const bool room_for_rest = (layers_left - taken - 1) >= (blocks_left - 1);
            if (!must_take && !last_block &&
                (!room_for_rest || static_cast<double>(block_sum + dw) > target)) {
                break;
            }
            blocks[static_cast<size_t>(param_layers[pos])] = b;
            block_sum += dw;
            ++taken;
            ++pos;
            if (!last_block &&
                static_cast<int>(param_layers.size() - pos) <= (blocks_left - 1)) {
                break;  // leave at least one layer per remaining block
            }
        }
        remaining -= block_sum;
    }
    return blocks;
}

void assign_blocks(QModel& model, int k) {
    model.block_of = partition_blocks(model, k);
}

// ---- persistence ----

namespace {

constexpr char kMagic[4] = {'Q', 'Z', 'O', 'T'};
constexpr uint16_t kVersion = 1;

struct ByteWriter {
    std::vector<uint8_t> bytes;

    void raw(const void* p, size_t n) {
        const auto* b = static_cast<const uint8_t*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
    template <typename T>
    void put(T v) {
        raw(&v, sizeof(T));
    }
};

struct ByteReader {
    const std::vector<uint8_t>& bytes;
    size_t pos = 0;

    void raw(void* p, size_t n) {
        if (pos + n > bytes.size()) throw std::runtime_error("checkpoint truncated");
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    }
    template <typename T>
    T get() {
        T v;
        raw(&v, sizeof(T));
        return v;
    }
    void skip(size_t n) {
        if (pos + n > bytes.size()) throw std::runtime_error("checkpoint truncated");
        pos += n;
    }
};

}  // namespace

void checkpoint_save(const QModel& model, const std::string& path) {
    validate_model(model);
    ByteWriter w;
    w.raw(kMagic, 4);
    w.put<uint16_t>(kVersion);
    w.put<uint32_t>(static_cast<uint32_t>(model.layers.size()));
    w.put<int32_t>(model.in_ch);
    w.put<int32_t>(model.in_h);
    w.put<int32_t>(model.in_w);
    w.put<int32_t>(model.num_classes);
    for (size_t i = 0; i < model.layers.size(); ++i) {
        const auto& l = model.layers[i];
        w.put<uint8_t>(static_cast<uint8_t>(l.kind));
        w.put<uint8_t>(static_cast<uint8_t>(l.act));
        w.put<uint8_t>(l.frozen ? 1 : 0);
        w.put<int32_t>(model.block_of[i]);
        for (int v : {l.in_ch, l.in_h, l.in_w, l.out_ch, l.out_h, l.out_w, l.kh, l.kw,
                      l.stride, l.pad}) {
            w.put<int32_t>(v);
        }
        w.put<uint32_t>(static_cast<uint32_t>(l.weights.shape.size()));
        for (int d : l.weights.shape) w.put<int32_t>(d);
        w.put<float>(l.s_w);
        w.put<float>(l.s_x);
        w.put<float>(l.s_z);
        for (int32_t v : l.weights.data) w.put<int8_t>(static_cast<int8_t>(v));
        w.put<uint32_t>(static_cast<uint32_t>(l.bias.size()));
        for (int32_t v : l.bias.data) w.put<int32_t>(v);
    }
    const uint32_t crc = static_cast<uint32_t>(
        crc32(0L, w.bytes.data(), static_cast<uInt>(w.bytes.size())));
    w.put<uint32_t>(crc);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f.write(reinterpret_cast<const char*>(w.bytes.data()),
            static_cast<std::streamsize>(w.bytes.size()));
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

QModel checkpoint_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 4 + 2 + 4 + 4) throw std::runtime_error("checkpoint truncated");

    // Format guards (magic, version) report before the integrity check so a
    // foreign or newer file is not misdiagnosed as corruption.
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw std::runtime_error("bad checkpoint magic");
    }
    const uint16_t file_version =
        static_cast<uint16_t>(bytes[4] | (static_cast<uint16_t>(bytes[5]) << 8));
    if (file_version > kVersion) {
        throw std::runtime_error("unsupported checkpoint version " +
                                 std::to_string(file_version));
    }

    const uint32_t stored_crc =
        static_cast<uint32_t>(bytes[bytes.size() - 4]) |
        (static_cast<uint32_t>(bytes[bytes.size() - 3]) << 8) |
        (static_cast<uint32_t>(bytes[bytes.size() - 2]) << 16) |
        (static_cast<uint32_t>(bytes[bytes.size() - 1]) << 24);
    bytes.resize(bytes.size() - 4);
    const uint32_t crc = static_cast<uint32_t>(
        crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
    if (crc != stored_crc) throw std::runtime_error("checkpoint checksum mismatch");

    ByteReader r{bytes};
    r.skip(6);  // magic + version, already checked
    const uint32_t layer_count = r.get<uint32_t>();
    QModel model;
    model.in_ch = r.get<int32_t>();
    model.in_h = r.get<int32_t>();
    model.in_w = r.get<int32_t>();
    model.num_classes = r.get<int32_t>();
    for (uint32_t i = 0; i < layer_count; ++i) {
        LayerSpec l;
        l.kind = static_cast<LayerKind>(r.get<uint8_t>());
        l.act = static_cast<Activation>(r.get<uint8_t>());
        l.frozen = r.get<uint8_t>() != 0;
        model.block_of.push_back(r.get<int32_t>());
        l.in_ch = r.get<int32_t>();
        l.in_h = r.get<int32_t>();
        l.in_w = r.get<int32_t>();
        l.out_ch = r.get<int32_t>();
        l.out_h = r.get<int32_t>();
        l.out_w = r.get<int32_t>();
        l.kh = r.get<int32_t>();
        l.kw = r.get<int32_t>();
        l.stride = r.get<int32_t>();
        l.pad = r.get<int32_t>();
        const uint32_t rank = r.get<uint32_t>();
        l.weights.shape.resize(rank);
        for (uint32_t d = 0; d < rank; ++d) l.weights.shape[d] = r.get<int32_t>();
        l.s_w = r.get<float>();
        l.s_x = r.get<float>();
        l.s_z = r.get<float>();
        const int64_t wn = shape_elems(l.weights.shape);
        l.weights.data.resize(static_cast<size_t>(wn));
        l.weights.scale = l.s_w;
        l.weights.bitwidth = 8;
        for (int64_t j = 0; j < wn; ++j) {
            l.weights.data[static_cast<size_t>(j)] = r.get<int8_t>();
        }
        const uint32_t bn = r.get<uint32_t>();
        l.bias.data.resize(bn);
        l.bias.shape = {static_cast<int>(bn)};
        l.bias.scale = l.s_w * l.s_x;
        l.bias.bitwidth = 32;
        if (bn == 0) l.bias.shape.clear();
        for (uint32_t j = 0; j < bn; ++j) l.bias.data[j] = r.get<int32_t>();
        model.layers.push_back(std::move(l));
    }
    validate_model(model);
    return model;
}

bool models_identical(const QModel& a, const QModel& b) {
    if (a.layers.size() != b.layers.size() || a.block_of != b.block_of ||
        a.in_ch != b.in_ch || a.in_h != b.in_h || a.in_w != b.in_w ||
        a.num_classes != b.num_classes) {
        return false;
    }
    for (size_t i = 0; i < a.layers.size(); ++i) {
        const auto& x = a.layers[i];
        const auto& y = b.layers[i];
        if (x.kind != y.kind || x.act != y.act || x.frozen != y.frozen ||
            x.s_w != y.s_w || x.s_x != y.s_x || x.s_z != y.s_z ||
            x.weights.data != y.weights.data || x.bias.data != y.bias.data) {
            return false;
        }
    }
    return true;
}

// ---- datasets ----

namespace {
constexpr char kDatasetMagic[4] = {'Q', 'D', 'S', '1'};
}

void dataset_save_qds(const Dataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open dataset for writing: " + path);
    f.write(kDatasetMagic, 4);
    auto put_u32 = [&f](uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    put_u32(static_cast<uint32_t>(ds.n));
    put_u32(static_cast<uint32_t>(ds.ch));
    put_u32(static_cast<uint32_t>(ds.h));
    put_u32(static_cast<uint32_t>(ds.w));
    for (float v : ds.x) {
        double p = std::llround(std::min(std::max(static_cast<double>(v), 0.0), 1.0) * 255.0);
        uint8_t b = static_cast<uint8_t>(p);
        f.write(reinterpret_cast<const char*>(&b), 1);
    }
    for (int y : ds.labels) put_u32(static_cast<uint32_t>(y));
    if (!f) throw std::runtime_error("dataset write failed: " + path);
}

static Dataset dataset_load_qds(std::ifstream& f, const std::string& path) {
    auto get_u32 = [&f]() {
        uint32_t v;
        f.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    Dataset ds;
    ds.n = static_cast<int>(get_u32());
    ds.ch = static_cast<int>(get_u32());
    ds.h = static_cast<int>(get_u32());
    ds.w = static_cast<int>(get_u32());
    if (!f || ds.n <= 0 || ds.ch <= 0 || ds.h <= 0 || ds.w <= 0) {
        throw std::runtime_error("malformed dataset header: " + path);
    }
    const int64_t total = static_cast<int64_t>(ds.n) * ds.sample_elems();
    std::vector<uint8_t> pixels(static_cast<size_t>(total));
    f.read(reinterpret_cast<char*>(pixels.data()), total);
    ds.x.resize(static_cast<size_t>(total));
    for (int64_t i = 0; i < total; ++i) {
        ds.x[static_cast<size_t>(i)] = static_cast<float>(pixels[static_cast<size_t>(i)]) / 255.0f;
    }
    ds.labels.resize(static_cast<size_t>(ds.n));
    for (int i = 0; i < ds.n; ++i) ds.labels[static_cast<size_t>(i)] = static_cast<int>(get_u32());
    if (!f) throw std::runtime_error("dataset truncated: " + path);
    return ds;
}

static Dataset dataset_load_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open dataset: " + path);
    Dataset ds;
    std::string line;
    int dim = -1;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<float> row;
        while (std::getline(ss, cell, ',')) {
            row.push_back(std::stof(cell));
        }
        if (row.size() < 2) throw std::runtime_error("csv row too short: " + path);
        if (dim < 0) {
            dim = static_cast<int>(row.size()) - 1;
        } else if (static_cast<int>(row.size()) - 1 != dim) {
            throw std::runtime_error("csv row width mismatch: " + path);
        }
        ds.labels.push_back(static_cast<int>(std::lround(row[0])));
        ds.x.insert(ds.x.end(), row.begin() + 1, row.end());
    }
    if (ds.labels.empty()) throw std::runtime_error("empty csv dataset: " + path);
    ds.n = static_cast<int>(ds.labels.size());
    ds.ch = dim;
    ds.h = 1;
    ds.w = 1;
    return ds;
}

Dataset dataset_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open dataset: " + path);
    char magic[4] = {0, 0, 0, 0};
    f.read(magic, 4);
    if (f && std::memcmp(magic, kDatasetMagic, 4) == 0) {
        return dataset_load_qds(f, path);
    }
    return dataset_load_csv(path);
}

Batch make_batch(const QModel& model, const Dataset& ds,
                 const std::vector<int>& indices) {
    if (indices.empty()) throw std::invalid_argument("make_batch: empty index set");
    if (ds.sample_elems() != static_cast<int64_t>(model.in_ch) * model.in_h * model.in_w) {
        throw std::invalid_argument("dataset sample shape does not match model input");
    }
    Batch b;
    const int64_t per = ds.sample_elems();
    std::vector<float> x;
    x.reserve(static_cast<size_t>(per) * indices.size());
    for (int idx : indices) {
        if (idx < 0 || idx >= ds.n) throw std::invalid_argument("make_batch: index out of range");
        x.insert(x.end(), ds.x.begin() + static_cast<int64_t>(idx) * per,
                 ds.x.begin() + static_cast<int64_t>(idx + 1) * per);
        b.labels.push_back(ds.labels[static_cast<size_t>(idx)]);
    }
    b.inputs = quantize(x, {static_cast<int>(indices.size()), model.in_ch, model.in_h, model.in_w},
                        model.input_scale(), 8, true);
    return b;
}

}  // namespace qzo
