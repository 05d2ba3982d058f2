#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qzo/model.hpp"
#include "qzo/optimizer.hpp"

namespace qzo {

enum class PerturbMode { ModelWP, LayerWP, LayerNP, Adaptive };
enum class LayerMode { WP, NP };

struct PerturbConfig {
    PerturbMode mode = PerturbMode::Adaptive;
    int queries = 100;                 // total budget per estimation scope
    int mu = 1;                        // integer smoothing radius
    uint32_t base_seed = 1;            // nonzero
    bool share_wp_across_batch = true; // one perturbed forward per (q, batch)
    bool per_sample_np = true;         // i.i.d. node perturbations per sample

    void check() const;
};

struct LayerGrad {
    std::vector<double> w, b;

    bool empty() const { return w.empty() && b.empty(); }
};

struct GradEstimate {
    std::vector<LayerGrad> layers;  // indexed by model layer; empty when not in scope
    std::vector<int64_t> dims;      // effective d per layer (model-wide: total d)
    std::vector<int> modes;         // LayerMode per layer, -1 when not estimated
    std::vector<int> layer_queries; // queries spent per layer
    uint32_t seed = 0;
    int64_t forward_evals = 0;
};

// WP iff d_w < d_a; NP otherwise (ties included).
LayerMode choose_mode(const LayerSpec& layer);

// Adds (apply) or subtracts (remove) mu * xi over the concatenated
// [weights, bias] parameter vector, xi = rademacher_fill(seed, d_w).
// Widened arithmetic, never clipped, so remove restores bit-exactly.
void perturb_weights_inplace(LayerSpec& layer, uint32_t seed, int mu, bool apply);

// Per-layer estimation primitives. `acts_in` is the layer's input activation
// at the current parameter snapshot; `clean_losses` the unperturbed
// per-sample losses. The model is bit-identical before and after the call.
// Accumulation order is fixed (query-major, then sample).
LayerGrad estimate_layer_wp(QModel& model, int layer_idx, const QTensor& acts_in,
                            const std::vector<double>& clean_losses,
                            const std::vector<int>& labels, int queries, int mu,
                            uint32_t layer_seed, bool share_across_batch,
                            int64_t* forward_evals);

LayerGrad estimate_layer_np(QModel& model, int layer_idx, const QTensor& acts_in,
                            const std::vector<double>& clean_losses,
                            const std::vector<int>& labels, int queries, int mu,
                            uint32_t layer_seed, bool per_sample,
                            int64_t* forward_evals);

// Spec-level entry points. scope_layer == -1 perturbs all trainable layers
// jointly (model-wise); otherwise only the given layer.
GradEstimate estimate_grad_wp(QModel& model, int scope_layer, const Batch& batch,
                              int queries, uint32_t seed,
                              bool share_across_batch = true);

GradEstimate estimate_grad_np(QModel& model, int layer_idx, const Batch& batch,
                              int queries, uint32_t seed, bool per_sample = true);

// Per-layer query budget under a fixed total budget.
int per_layer_queries(int total_queries, int trainable_layer_count);

struct StepReport {
    int64_t iteration = 0;
    double clean_loss = 0.0;
    std::vector<std::string> layer_modes;  // per layer: WP / NP / frozen / pool
    int64_t forward_evals = 0;
    double wall_ms = 0.0;
    uint32_t step_seed = 0;

    std::string modes_string() const;  // e.g. "NP+WP+frozen"
};

// One training step per Algorithm-1 semantics: a single clean forward, then
// per-layer seed-replayed gradient estimation and immediate update, with the
// downstream activations kept at the pre-update snapshot so the overall step
// is a global update. Aborts atomically on error.
StepReport train_step(QModel& model, const Batch& batch, const PerturbConfig& pcfg,
                      double eta, int n_gns, int64_t step_index);

// Two-pass route used for gradient accumulation: estimate every trainable
// layer at the current snapshot without updating anything.
GradEstimate estimate_step_grads(QModel& model, const Batch& batch,
                                 const PerturbConfig& pcfg, int64_t step_index,
                                 double* clean_loss_out = nullptr);

// Applies a (possibly accumulated) estimate; n_gns is the effective sample
// count entering the gradient-norm scaling.
void apply_step_update(QModel& model, const GradEstimate& est, double eta, int n_gns);

}  // namespace qzo
