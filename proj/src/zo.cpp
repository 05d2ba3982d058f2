#include "qzo/zo.hpp"

#include <chrono>
#include <stdexcept>

#include "qzo/prng.hpp"

namespace qzo {

void PerturbConfig::check() const {
    if (queries < 1) throw std::invalid_argument("PerturbConfig: queries must be >= 1");
    if (mu < 1) throw std::invalid_argument("PerturbConfig: mu must be a positive integer");
    if (base_seed == 0) throw std::invalid_argument("PerturbConfig: zero seed");
}

LayerMode choose_mode(const LayerSpec& layer) {
    return layer.d_w() < layer.d_a() ? LayerMode::WP : LayerMode::NP;
}

int per_layer_queries(int total_queries, int trainable_layer_count) {
    if (trainable_layer_count < 1) return total_queries;
    const int q = total_queries / trainable_layer_count;
    return q < 1 ? 1 : q;
}

void perturb_weights_inplace(LayerSpec& layer, uint32_t seed, int mu, bool apply) {
    if (seed == 0) throw std::invalid_argument("perturb_weights_inplace: zero seed");
    if (!layer.has_params()) {
        throw std::invalid_argument("perturb_weights_inplace: layer has no parameters");
    }
    XorShift32 gen(seed);
    const int32_t sign = apply ? 1 : -1;
    for (auto& v : layer.weights.data) {
        v += sign * mu * gen.next_rademacher();
    }
    for (auto& v : layer.bias.data) {
        v += sign * mu * gen.next_rademacher();
    }
}

namespace {

LayerGrad zero_grad(const LayerSpec& layer) {
    LayerGrad g;
    g.w.assign(static_cast<size_t>(layer.weights.size()), 0.0);
    g.b.assign(static_cast<size_t>(layer.bias.size()), 0.0);
    return g;
}

void accumulate_wp(LayerGrad& g, const LayerSpec& layer, uint32_t seed, double coef) {
    XorShift32 gen(seed);
    for (auto& v : g.w) v += coef * gen.next_rademacher();
    for (auto& v : g.b) v += coef * gen.next_rademacher();
}

// kappa * gz . x^T accumulation, specialized per layer kind. gz is the
// per-sample node-gradient buffer [N, d_a]; x the quantized layer input.
void np_convert(LayerGrad& g, const LayerSpec& layer, const std::vector<double>& gz,
                const QTensor& x, int n) {
    const double kappa = layer.requant_factor();
    const int64_t d_a = layer.d_a();
    switch (layer.kind) {
        case LayerKind::FullyConnected: {
            for (int s = 0; s < n; ++s) {
                const double* gzr = gz.data() + static_cast<int64_t>(s) * d_a;
                const int32_t* xr = x.data.data() + static_cast<int64_t>(s) * layer.in_ch;
                for (int o = 0; o < layer.out_ch; ++o) {
                    const double go = kappa * gzr[o];
                    if (go == 0.0) continue;
                    double* gw = g.w.data() + static_cast<int64_t>(o) * layer.in_ch;
                    for (int i = 0; i < layer.in_ch; ++i) gw[i] += go * xr[i];
                    if (!g.b.empty()) g.b[static_cast<size_t>(o)] += go;
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
                            const int64_t zi =
                                ((static_cast<int64_t>(s) * layer.out_ch + co) * layer.out_h + oy) *
                                    layer.out_w + ox;
                            const double go = kappa * gz[static_cast<size_t>(zi)];
                            if (go == 0.0) continue;
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
                                        g.w[static_cast<size_t>(wi)] +=
                                            go * x.data[static_cast<size_t>(xi)];
                                    }
                                }
                            }
                            if (!g.b.empty()) g.b[static_cast<size_t>(co)] += go;
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::GlobalAvgPool:
            throw std::invalid_argument("np_convert: pooling layer");
    }
}

}  // namespace

LayerGrad estimate_layer_wp(QModel& model, int layer_idx, const QTensor& acts_in,
                            const std::vector<double>& clean_losses,
                            const std::vector<int>& labels, int queries, int mu,
                            uint32_t layer_seed, bool share_across_batch,
                            int64_t* forward_evals) {
    LayerSpec& layer = model.layers[static_cast<size_t>(layer_idx)];
    if (!layer.has_params()) {
        throw std::invalid_argument("estimate_layer_wp: layer has no parameters");
    }
    const int n = static_cast<int>(labels.size());
    if (n == 0) throw std::invalid_argument("estimate_layer_wp: empty batch");
    LayerGrad g = zero_grad(layer);
    const double norm = 1.0 / (static_cast<double>(n) * queries * mu);
    if (share_across_batch) {
        for (int q = 0; q < queries; ++q) {
            const uint32_t seed = derive_seed(layer_seed, layer_idx, q, 0);
            perturb_weights_inplace(layer, seed, mu, true);
            const std::vector<double> losses =
                forward_from(model, layer_idx, acts_in, labels, forward_evals);
            perturb_weights_inplace(layer, seed, mu, false);
            double diff_sum = 0.0;
            for (int s = 0; s < n; ++s) diff_sum += losses[static_cast<size_t>(s)] -
                                                    clean_losses[static_cast<size_t>(s)];
            accumulate_wp(g, layer, seed, diff_sum * norm);
        }
    } else {
        for (int q = 0; q < queries; ++q) {
            for (int s = 0; s < n; ++s) {
                const uint32_t seed = derive_seed(layer_seed, layer_idx, q, s);
                perturb_weights_inplace(layer, seed, mu, true);
                const QTensor x = sample_slice(acts_in, n, s);
                const double loss = forward_from_single(model, layer_idx, x,
                                                        labels[static_cast<size_t>(s)],
                                                        forward_evals);
                perturb_weights_inplace(layer, seed, mu, false);
                accumulate_wp(g, layer, seed,
                              (loss - clean_losses[static_cast<size_t>(s)]) * norm);
            }
        }
    }
    return g;
}

LayerGrad estimate_layer_np(QModel& model, int layer_idx, const QTensor& acts_in,
                            const std::vector<double>& clean_losses,
                            const std::vector<int>& labels, int queries, int mu,
                            uint32_t layer_seed, bool per_sample,
                            int64_t* forward_evals) {
    LayerSpec& layer = model.layers[static_cast<size_t>(layer_idx)];
    if (!layer.has_preact() || !layer.has_params()) {
        throw std::invalid_argument("estimate_layer_np: layer has no pre-activation");
    }
    const int n = static_cast<int>(labels.size());
    if (n == 0) throw std::invalid_argument("estimate_layer_np: empty batch");
    const int64_t d_a = layer.d_a();
    const QTensor z = layer_preact(layer, acts_in, n);
    std::vector<double> gz(static_cast<size_t>(n) * static_cast<size_t>(d_a), 0.0);
    const double norm = 1.0 / (static_cast<double>(n) * queries * mu);

    QTensor z_pert;
    z_pert.shape = layer.out_shape(1);
    z_pert.scale = layer.s_z;
    z_pert.bitwidth = 8;
    z_pert.is_signed = true;
    z_pert.data.resize(static_cast<size_t>(d_a));

    for (int q = 0; q < queries; ++q) {
        for (int s = 0; s < n; ++s) {
            const uint32_t seed =
                derive_seed(layer_seed, layer_idx, q, per_sample ? s : 0);
            const std::vector<int32_t> xi = rademacher_fill(seed, d_a);
            const int32_t* zr = z.data.data() + static_cast<int64_t>(s) * d_a;
            for (int64_t j = 0; j < d_a; ++j) {
                z_pert.data[static_cast<size_t>(j)] = zr[j] + mu * xi[static_cast<size_t>(j)];
            }
            const QTensor a_pert = apply_activation(layer, z_pert);
            const double loss = forward_from_single(model, layer_idx + 1, a_pert,
                                                    labels[static_cast<size_t>(s)],
                                                    forward_evals);
            const double coef = (loss - clean_losses[static_cast<size_t>(s)]) * norm;
            double* gzr = gz.data() + static_cast<int64_t>(s) * d_a;
            for (int64_t j = 0; j < d_a; ++j) gzr[j] += coef * xi[static_cast<size_t>(j)];
        }
    }
    LayerGrad g = zero_grad(layer);
    np_convert(g, layer, gz, acts_in, n);
    return g;
}

namespace {

// Collects each layer's input activation at the current snapshot plus the
// clean per-sample losses.
struct ActsCache {
    std::vector<QTensor> inputs;  // per layer
    std::vector<double> clean_losses;
};

ActsCache collect_activations(const QModel& model, const Batch& batch,
                              int64_t* forward_evals) {
    ActsCache cache;
    const int n = batch.n();
    QTensor a = batch.inputs;
    for (const auto& layer : model.layers) {
        cache.inputs.push_back(a);
        a = q_layer_forward(layer, a, n);
    }
    const int c = model.num_classes;
    cache.clean_losses.resize(static_cast<size_t>(n));
    std::vector<float> logits(static_cast<size_t>(c));
    for (int s = 0; s < n; ++s) {
        for (int j = 0; j < c; ++j) {
            logits[static_cast<size_t>(j)] =
                a.scale * static_cast<float>(a.data[static_cast<size_t>(static_cast<int64_t>(s) * c + j)]);
        }
        cache.clean_losses[static_cast<size_t>(s)] =
            softmax_cross_entropy(logits.data(), c, batch.labels[static_cast<size_t>(s)]);
    }
    if (forward_evals) *forward_evals += n;
    return cache;
}

LayerGrad model_wp_layer_grad(const LayerSpec& layer) { return zero_grad(layer); }

}  // namespace

GradEstimate estimate_grad_wp(QModel& model, int scope_layer, const Batch& batch,
                              int queries, uint32_t seed, bool share_across_batch) {
    if (seed == 0) throw std::invalid_argument("estimate_grad_wp: zero seed");
    if (queries < 1) throw std::invalid_argument("estimate_grad_wp: queries must be >= 1");
    validate_batch(model, batch);
    const int n = batch.n();

    GradEstimate est;
    est.seed = seed;
    est.layers.resize(model.layers.size());
    est.dims.assign(model.layers.size(), 0);
    est.modes.assign(model.layers.size(), -1);
    est.layer_queries.assign(model.layers.size(), 0);

    if (scope_layer >= 0) {
        ActsCache cache = collect_activations(model, batch, &est.forward_evals);
        est.layers[static_cast<size_t>(scope_layer)] = estimate_layer_wp(
            model, scope_layer, cache.inputs[static_cast<size_t>(scope_layer)],
            cache.clean_losses, batch.labels, queries, 1, seed, share_across_batch,
            &est.forward_evals);
        est.dims[static_cast<size_t>(scope_layer)] =
            model.layers[static_cast<size_t>(scope_layer)].d_w();
        est.modes[static_cast<size_t>(scope_layer)] = static_cast<int>(LayerMode::WP);
        est.layer_queries[static_cast<size_t>(scope_layer)] = queries;
        return est;
    }

    // Model-wise: perturb every trainable layer jointly per query.
    const std::vector<int> scope = model.trainable_layers();
    if (scope.empty()) throw std::invalid_argument("estimate_grad_wp: nothing trainable");
    int64_t total_d = 0;
    for (int i : scope) {
        est.layers[static_cast<size_t>(i)] = model_wp_layer_grad(model.layers[static_cast<size_t>(i)]);
        est.modes[static_cast<size_t>(i)] = static_cast<int>(LayerMode::WP);
        est.layer_queries[static_cast<size_t>(i)] = queries;
        total_d += model.layers[static_cast<size_t>(i)].d_w();
    }
    std::vector<double> clean(static_cast<size_t>(n));
    {
        int64_t* fe = &est.forward_evals;
        clean = forward_from(model, 0, batch.inputs, batch.labels, fe);
    }
    const double norm = 1.0 / (static_cast<double>(n) * queries);
    if (share_across_batch) {
        for (int q = 0; q < queries; ++q) {
            for (int i : scope) {
                perturb_weights_inplace(model.layers[static_cast<size_t>(i)],
                                        derive_seed(seed, i, q, 0), 1, true);
            }
            const std::vector<double> losses =
                forward_from(model, 0, batch.inputs, batch.labels, &est.forward_evals);
            for (int i : scope) {
                perturb_weights_inplace(model.layers[static_cast<size_t>(i)],
                                        derive_seed(seed, i, q, 0), 1, false);
            }
            double diff_sum = 0.0;
            for (int s = 0; s < n; ++s) diff_sum += losses[static_cast<size_t>(s)] - clean[static_cast<size_t>(s)];
            for (int i : scope) {
                accumulate_wp(est.layers[static_cast<size_t>(i)], model.layers[static_cast<size_t>(i)],
                              derive_seed(seed, i, q, 0), diff_sum * norm);
            }
        }
    } else {
        for (int q = 0; q < queries; ++q) {
            for (int s = 0; s < n; ++s) {
                for (int i : scope) {
                    perturb_weights_inplace(model.layers[static_cast<size_t>(i)],
                                            derive_seed(seed, i, q, s), 1, true);
                }
                const QTensor x = sample_slice(batch.inputs, n, s);
                const double loss = forward_from_single(model, 0, x,
                                                        batch.labels[static_cast<size_t>(s)],
                                                        &est.forward_evals);
                for (int i : scope) {
                    perturb_weights_inplace(model.layers[static_cast<size_t>(i)],
                                            derive_seed(seed, i, q, s), 1, false);
                }
                const double coef = (loss - clean[static_cast<size_t>(s)]) * norm;
                for (int i : scope) {
                    accumulate_wp(est.layers[static_cast<size_t>(i)],
                                  model.layers[static_cast<size_t>(i)],
                                  derive_seed(seed, i, q, s), coef);
                }
            }
        }
    }
    for (int i : scope) est.dims[static_cast<size_t>(i)] = total_d;
    return est;
}

GradEstimate estimate_grad_np(QModel& model, int layer_idx, const Batch& batch,
                              int queries, uint32_t seed, bool per_sample) {
    if (seed == 0) throw std::invalid_argument("estimate_grad_np: zero seed");
    validate_batch(model, batch);
    GradEstimate est;
    est.seed = seed;
    est.layers.resize(model.layers.size());
    est.dims.assign(model.layers.size(), 0);
    est.modes.assign(model.layers.size(), -1);
    est.layer_queries.assign(model.layers.size(), 0);
    ActsCache cache = collect_activations(model, batch, &est.forward_evals);
    est.layers[static_cast<size_t>(layer_idx)] = estimate_layer_np(
        model, layer_idx, cache.inputs[static_cast<size_t>(layer_idx)],
        cache.clean_losses, batch.labels, queries, 1, seed, per_sample,
        &est.forward_evals);
    est.dims[static_cast<size_t>(layer_idx)] =
        model.layers[static_cast<size_t>(layer_idx)].d_a();
    est.modes[static_cast<size_t>(layer_idx)] = static_cast<int>(LayerMode::NP);
    est.layer_queries[static_cast<size_t>(layer_idx)] = queries;
    return est;
}

std::string StepReport::modes_string() const {
    std::string s;
    for (size_t i = 0; i < layer_modes.size(); ++i) {
        if (i) s += '+';
        s += layer_modes[i];
    }
    return s;
}

namespace {

LayerMode realized_mode(PerturbMode mode, const LayerSpec& layer) {
    switch (mode) {
        case PerturbMode::LayerWP:
            return LayerMode::WP;
        case PerturbMode::LayerNP:
            return layer.has_preact() ? LayerMode::NP : LayerMode::WP;
        case PerturbMode::Adaptive:
            return choose_mode(layer);
        case PerturbMode::ModelWP:
            return LayerMode::WP;
    }
    return LayerMode::WP;
}

void update_layer(LayerSpec& layer, const LayerGrad& g, double eta, int n_gns,
                  int q, int64_t d) {
    apply_update(layer.weights, g.w, eta, n_gns, q, d, layer.s_w);
    if (layer.bias.size() > 0) {
        apply_update(layer.bias, g.b, eta, n_gns, q, d,
                     static_cast<double>(layer.s_w) * layer.s_x);
    }
}

}  // namespace

StepReport train_step(QModel& model, const Batch& batch, const PerturbConfig& pcfg,
                      double eta, int n_gns, int64_t step_index) {
    pcfg.check();
    validate_batch(model, batch);
    const auto t0 = std::chrono::steady_clock::now();
    const QModel snapshot = model;  // atomic abort support
    try {
        StepReport report;
        report.iteration = step_index;
        report.step_seed = derive_step_seed(pcfg.base_seed, step_index);
        const int n = batch.n();

        const std::vector<int> trainables = model.trainable_layers();

        if (pcfg.mode == PerturbMode::ModelWP) {
            GradEstimate est = estimate_grad_wp(model, -1, batch, pcfg.queries,
                                                report.step_seed,
                                                pcfg.share_wp_across_batch);
            double clean = 0.0;
            {
                const auto losses = forward(model, batch).losses;
                for (double l : losses) clean += l;
                clean /= n;
            }
            // The estimate already did its own clean forward; reuse its count.
            report.clean_loss = clean;
            report.forward_evals = est.forward_evals;
            for (int i : trainables) {
                update_layer(model.layers[static_cast<size_t>(i)],
                             est.layers[static_cast<size_t>(i)], eta, n_gns,
                             pcfg.queries, est.dims[static_cast<size_t>(i)]);
            }
            for (const auto& layer : model.layers) {
                report.layer_modes.push_back(!layer.has_params() ? "pool"
                                             : layer.frozen      ? "frozen"
                                                                 : "WP");
            }
            report.wall_ms = std::chrono::duration<double, std::milli>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count();
            return report;
        }

        const int q_layer =
            per_layer_queries(pcfg.queries, static_cast<int>(trainables.size()));

        int64_t fwd = 0;
        QTensor acts = batch.inputs;
        // Clean forward.
        std::vector<double> clean = forward_from(model, 0, acts, batch.labels, &fwd);
        double clean_mean = 0.0;
        for (double l : clean) clean_mean += l;
        report.clean_loss = clean_mean / n;

        for (size_t i = 0; i < model.layers.size(); ++i) {
            LayerSpec& layer = model.layers[i];
            const bool last = i + 1 == model.layers.size();
            if (!layer.trainable()) {
                report.layer_modes.push_back(!layer.has_params() ? "pool" : "frozen");
                if (!last) acts = q_layer_forward(layer, acts, n);
                continue;
            }
            // Step-t output of this layer, reused below so downstream layers
            // keep seeing pre-update activations (global-update semantics).
            QTensor a_next;
            if (!last) a_next = q_layer_forward(layer, acts, n);

            const LayerMode mode = realized_mode(pcfg.mode, layer);
            LayerGrad g;
            int64_t d;
            if (mode == LayerMode::WP) {
                g = estimate_layer_wp(model, static_cast<int>(i), acts, clean,
                                      batch.labels, q_layer, pcfg.mu, report.step_seed,
                                      pcfg.share_wp_across_batch, &fwd);
                d = layer.d_w();
                report.layer_modes.push_back("WP");
            } else {
                g = estimate_layer_np(model, static_cast<int>(i), acts, clean,
                                      batch.labels, q_layer, pcfg.mu, report.step_seed,
                                      pcfg.per_sample_np, &fwd);
                d = layer.d_a();
                report.layer_modes.push_back("NP");
            }
            update_layer(layer, g, eta, n_gns, q_layer, d);
            if (!last) acts = a_next;
        }
        report.forward_evals = fwd;
        report.wall_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
        return report;
    } catch (...) {
        model = snapshot;
        throw;
    }
}

GradEstimate estimate_step_grads(QModel& model, const Batch& batch,
                                 const PerturbConfig& pcfg, int64_t step_index,
                                 double* clean_loss_out) {
    pcfg.check();
    validate_batch(model, batch);
    const uint32_t step_seed = derive_step_seed(pcfg.base_seed, step_index);
    const int n = batch.n();

    if (pcfg.mode == PerturbMode::ModelWP) {
        GradEstimate est = estimate_grad_wp(model, -1, batch, pcfg.queries, step_seed,
                                            pcfg.share_wp_across_batch);
        if (clean_loss_out) {
            const auto losses = forward(model, batch).losses;
            double sum = 0.0;
            for (double l : losses) sum += l;
            *clean_loss_out = sum / n;
        }
        return est;
    }

    GradEstimate est;
    est.seed = step_seed;
    est.layers.resize(model.layers.size());
    est.dims.assign(model.layers.size(), 0);
    est.modes.assign(model.layers.size(), -1);
    est.layer_queries.assign(model.layers.size(), 0);

    ActsCache cache = collect_activations(model, batch, &est.forward_evals);
    if (clean_loss_out) {
        double sum = 0.0;
        for (double l : cache.clean_losses) sum += l;
        *clean_loss_out = sum / n;
    }
    const std::vector<int> trainables = model.trainable_layers();
    const int q_layer =
        per_layer_queries(pcfg.queries, static_cast<int>(trainables.size()));
    for (int i : trainables) {
        LayerSpec& layer = model.layers[static_cast<size_t>(i)];
        const LayerMode mode = realized_mode(pcfg.mode, layer);
        if (mode == LayerMode::WP) {
            est.layers[static_cast<size_t>(i)] = estimate_layer_wp(
                model, i, cache.inputs[static_cast<size_t>(i)], cache.clean_losses,
                batch.labels, q_layer, pcfg.mu, step_seed,
                pcfg.share_wp_across_batch, &est.forward_evals);
            est.dims[static_cast<size_t>(i)] = layer.d_w();
        } else {
            est.layers[static_cast<size_t>(i)] = estimate_layer_np(
                model, i, cache.inputs[static_cast<size_t>(i)], cache.clean_losses,
                batch.labels, q_layer, pcfg.mu, step_seed, pcfg.per_sample_np,
                &est.forward_evals);
            est.dims[static_cast<size_t>(i)] = layer.d_a();
        }
        est.modes[static_cast<size_t>(i)] = static_cast<int>(mode);
        est.layer_queries[static_cast<size_t>(i)] = q_layer;
    }
    return est;
}

void apply_step_update(QModel& model, const GradEstimate& est, double eta, int n_gns) {
    for (size_t i = 0; i < model.layers.size(); ++i) {
        if (est.modes[i] < 0 || est.layers[i].empty()) continue;
        update_layer(model.layers[i], est.layers[i], eta, n_gns,
                     est.layer_queries[i], est.dims[i]);
    }
}

}  // namespace qzo
