#pragma once

#include <cstdint>
#include <vector>

#include "qzo/model.hpp"

namespace qzo {

// Per-layer gradients of the mean cross-entropy loss, floating point.
struct FpGrads {
    std::vector<std::vector<double>> w, b;
};

// Exact reverse-mode gradients for the FC/conv/dwconv/GAP/ReLU/softmax-CE
// stack of FpModel.
FpGrads bp_grad_fp(const FpModel& fp, const std::vector<float>& inputs, int n,
                   const std::vector<int>& labels);

// Central differences (L(theta+h e) - L(theta-h e)) / 2h per coordinate.
FpGrads finite_diff_grad(const FpModel& fp, const std::vector<float>& inputs, int n,
                         const std::vector<int>& labels, double h);

// <g,h> / (|g| |h|); defined as 0 when both are zero.
double cosine_similarity(const std::vector<double>& g, const std::vector<double>& h);

// Empirical vs closed-form estimator MSE for the RGE on the stochastic
// quadratic l(theta; x) = 0.5 |theta|^2 + x^T theta with x ~ N(0, sigma^2 I):
// grad L = theta, S = |theta|^2, per-sample gradient variance V = d sigma^2.
// Each of the N*Q queries draws an independent (xi, x) pair, matching the
// i.i.d. setting of the variance law MSE = ((d-1) S + d V) / (N Q) + O(mu^2).
struct VarianceReport {
    int d = 0, n = 0, q = 0;
    double mu = 0.0, sigma = 0.0;
    int64_t trials = 0;
    double s_term = 0.0;            // S
    double v_term = 0.0;            // V
    double theory_grad_term = 0.0;  // (d-1)/(NQ) * S
    double theory_noise_term = 0.0; // d/(NQ) * V
    double theoretical_mse = 0.0;
    double empirical_mse = 0.0;
    double relative_deviation = 0.0;

    std::string to_csv_row() const;
    static std::string csv_header();
};

VarianceReport variance_report(int d, int n, int q, double mu, double sigma,
                               int64_t trials, uint64_t seed);

// Utility used by grad-check and the oracle tests.
std::vector<double> flatten_grads(const FpGrads& g);

}  // namespace qzo
