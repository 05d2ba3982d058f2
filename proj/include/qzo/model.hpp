#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qzo/layer.hpp"
#include "qzo/qtensor.hpp"

namespace qzo {

// Ordered quantized layer stack with a contiguous block partition over the
// parameterized layers. Scale chain: s_x of layer i+1 equals s_z of layer i.
struct QModel {
    std::vector<LayerSpec> layers;
    std::vector<int> block_of;  // per layer; -1 for layers without parameters
    int in_ch = 0, in_h = 1, in_w = 1;
    int num_classes = 0;

    float input_scale() const { return layers.front().s_x; }
    int num_blocks() const;
    int64_t trainable_params() const;
    std::vector<int> trainable_layers() const;
};

struct Batch {
    QTensor inputs;  // [N, C, H, W], 8-bit signed, input scale
    std::vector<int> labels;

    int n() const { return static_cast<int>(labels.size()); }
};

struct ForwardResult {
    std::vector<float> logits;   // N x C, row-major
    std::vector<double> losses;  // per sample
};

void validate_model(const QModel& model);
void validate_batch(const QModel& model, const Batch& batch);

// Per-sample softmax cross-entropy of dequantized final logits.
double softmax_cross_entropy(const float* logits, int num_classes, int label);

// Full forward through all layers. Deterministic and pure.
ForwardResult forward(const QModel& model, const Batch& batch);

// Forward starting at `first_layer` from the cached activation `acts`
// (the input of that layer, at its s_x scale). Returns per-sample losses and
// adds one forward evaluation per sample to *forward_evals when non-null.
std::vector<double> forward_from(const QModel& model, int first_layer,
                                 const QTensor& acts, const std::vector<int>& labels,
                                 int64_t* forward_evals = nullptr);

// Same as forward_from but for a single sample slice.
double forward_from_single(const QModel& model, int first_layer, const QTensor& act,
                           int label, int64_t* forward_evals = nullptr);

// Extracts sample n of a batched activation tensor.
QTensor sample_slice(const QTensor& acts, int n_total, int n);

// ---- floating-point mirror (used for calibration and by the oracles) ----

struct FpLayer {
    LayerKind kind = LayerKind::FullyConnected;
    Activation act = Activation::Identity;
    int in_ch = 0, in_h = 1, in_w = 1;
    int out_ch = 0, out_h = 1, out_w = 1;
    int kh = 1, kw = 1, stride = 1, pad = 0;
    std::vector<float> weights, bias;
};

struct FpModel {
    std::vector<FpLayer> layers;
    int in_ch = 0, in_h = 1, in_w = 1;
    int num_classes = 0;
};

// Dequantized mirror of a quantized model (weights s_w*W, bias s_w*s_x*b).
FpModel dequantize_model(const QModel& model);

struct FpForwardCache {
    std::vector<std::vector<float>> acts;     // layer inputs, acts[0] = x
    std::vector<std::vector<float>> preacts;  // z per layer (empty for pooling)
    std::vector<float> logits;                // N x C
    std::vector<double> losses;               // per sample (when labels given)
};

std::vector<float> fp_layer_preact(const FpLayer& layer, const std::vector<float>& x,
                                   int n);
std::vector<float> fp_layer_forward(const FpLayer& layer, const std::vector<float>& x,
                                    int n);
FpForwardCache fp_forward(const FpModel& fp, const std::vector<float>& inputs, int n,
                          const std::vector<int>* labels = nullptr);

// Post-training quantization with per-tensor symmetric scales calibrated on
// max absolute values over the calibration set. Zero-max tensors get the
// 2^-20 scale floor.
QModel ptq_calibrate(const FpModel& fp, const std::vector<float>& calib_inputs,
                     int calib_n);

// Contiguous partition of the parameterized layers into k blocks, greedily
// balancing the trainable-parameter count. Deterministic.
std::vector<int> partition_blocks(const QModel& model, int k = 4);
void assign_blocks(QModel& model, int k = 4);

// ---- persistence ----

void checkpoint_save(const QModel& model, const std::string& path);
QModel checkpoint_load(const std::string& path);
bool models_identical(const QModel& a, const QModel& b);

// ---- datasets ----

struct Dataset {
    int n = 0, ch = 0, h = 1, w = 1;
    std::vector<float> x;  // n * ch * h * w, sample-major
    std::vector<int> labels;

    int64_t sample_elems() const { return static_cast<int64_t>(ch) * h * w; }
};

// Binary "QDS1" container with raw u8 pixels (mapped to [0,1]) or CSV with
// the label in the first column.
Dataset dataset_load(const std::string& path);
void dataset_save_qds(const Dataset& ds, const std::string& path);

Batch make_batch(const QModel& model, const Dataset& ds,
                 const std::vector<int>& indices);

}  // namespace qzo
