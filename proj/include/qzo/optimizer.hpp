#pragma once

#include <cstdint>
#include <vector>

#include "qzo/qtensor.hpp"

namespace qzo {

struct TrainConfig {
    double lr = 0.01;       // eta_0
    int epochs = 1;
    int batch_size = 1;
    int grad_accum = 1;     // micro-steps per update
    int queries = 100;      // total query budget per estimation scope
    int scope_block = -1;   // -1 = all layers trainable
};

// Gradient-norm scaling: NQ / (NQ + d - 1). In (0, 1], equals 1 iff d == 1.
double gns_factor(int64_t n, int64_t q, int64_t d);

// Quantization-aware scaling: 1 / s^2.
double qas_factor(double s);

// Cosine decay: eta_t = eta0 * (1 + cos(pi * t / t_total)) / 2.
double cosine_lr(int64_t t, int64_t t_total, double eta0);

// In-place quantized ZO-SGD step:
// theta' = clip(round(theta - gns(n,q,d) * qas(s) * eta * g), qmin, qmax).
void apply_update(QTensor& theta, const std::vector<double>& grad, double eta,
                  int64_t n, int64_t q, int64_t d, double s_theta);

}  // namespace qzo
