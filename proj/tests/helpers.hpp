#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "qzo/model.hpp"

namespace testutil {

// Linearly separable 2-class task on [0,1]^dim.
inline qzo::Dataset synthetic_2class(int n, int dim, uint32_t seed) {
    qzo::Dataset ds;
    ds.n = n;
    ds.ch = dim;
    ds.h = 1;
    ds.w = 1;
    ds.x.resize(static_cast<size_t>(n) * dim);
    ds.labels.resize(static_cast<size_t>(n));
    std::mt19937 gen(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::normal_distribution<float> nd(0.0f, 1.0f);
    std::vector<float> hyper(static_cast<size_t>(dim));
    for (auto& h : hyper) h = nd(gen);
    for (int i = 0; i < n; ++i) {
        float dot = 0.0f;
        for (int j = 0; j < dim; ++j) {
            const float v = u(gen);
            ds.x[static_cast<size_t>(i) * dim + static_cast<size_t>(j)] = v;
            dot += hyper[static_cast<size_t>(j)] * (v - 0.5f);
        }
        ds.labels[static_cast<size_t>(i)] = dot > 0.0f ? 1 : 0;
    }
    return ds;
}

inline qzo::FpModel fp_mlp(const std::vector<int>& widths, uint32_t seed,
                           float weight_std_scale = 1.0f) {
    qzo::FpModel fp;
    fp.in_ch = widths.front();
    fp.num_classes = widths.back();
    std::mt19937 gen(seed);
    for (size_t i = 0; i + 1 < widths.size(); ++i) {
        qzo::FpLayer l;
        l.kind = qzo::LayerKind::FullyConnected;
        l.act = i + 2 < widths.size() ? qzo::Activation::Relu
                                      : qzo::Activation::Identity;
        l.in_ch = widths[i];
        l.out_ch = widths[i + 1];
        std::normal_distribution<float> nd(
            0.0f, weight_std_scale / std::sqrt(static_cast<float>(l.in_ch)));
        l.weights.resize(static_cast<size_t>(l.out_ch) * l.in_ch);
        l.bias.assign(static_cast<size_t>(l.out_ch), 0.0f);
        for (auto& w : l.weights) w = nd(gen);
        fp.layers.push_back(l);
    }
    return fp;
}

// Quantized MLP calibrated on a synthetic training set; returns both.
struct QuantizedToy {
    qzo::QModel model;
    qzo::Dataset train;
};

inline QuantizedToy quantized_mlp(const std::vector<int>& widths, int n_train,
                                  uint32_t seed) {
    QuantizedToy t;
    t.train = synthetic_2class(n_train, widths.front(), seed);
    const qzo::FpModel fp = fp_mlp(widths, seed + 1);
    t.model = qzo::ptq_calibrate(fp, t.train.x, t.train.n);
    return t;
}

inline qzo::Batch first_batch(const qzo::QModel& model, const qzo::Dataset& ds,
                              int n) {
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    return qzo::make_batch(model, ds, idx);
}

}  // namespace testutil
