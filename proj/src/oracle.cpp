#include "qzo/oracle.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qzo {

namespace {

// dL/dlogits for mean softmax cross-entropy, row-major [n, c].
std::vector<double> ce_backward(const std::vector<float>& logits, int n, int c,
                                const std::vector<int>& labels) {
    std::vector<double> g(static_cast<size_t>(n) * static_cast<size_t>(c));
    for (int s = 0; s < n; ++s) {
        const float* row = logits.data() + static_cast<int64_t>(s) * c;
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max<double>(mx, row[j]);
        double denom = 0.0;
        for (int j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
        for (int j = 0; j < c; ++j) {
            double p = std::exp(row[j] - mx) / denom;
            if (j == labels[static_cast<size_t>(s)]) p -= 1.0;
            g[static_cast<size_t>(static_cast<int64_t>(s) * c + j)] = p / n;
        }
    }
    return g;
}

// Backward through one layer: consumes dL/d(output) and the cached input and
// pre-activation, fills the layer's parameter gradients, returns dL/d(input).
std::vector<double> layer_backward(const FpLayer& layer, const std::vector<float>& x,
                                   const std::vector<float>& z, int n,
                                   std::vector<double> g_out,
                                   std::vector<double>& gw, std::vector<double>& gb) {
    if (layer.act == Activation::Relu) {
        for (size_t i = 0; i < g_out.size(); ++i) {
            if (z[i] <= 0.0f) g_out[i] = 0.0;
        }
    }
    const int64_t in_per = static_cast<int64_t>(layer.in_ch) * layer.in_h * layer.in_w;
    std::vector<double> g_in(static_cast<size_t>(n) * static_cast<size_t>(in_per), 0.0);
    gw.assign(layer.weights.size(), 0.0);
    gb.assign(layer.bias.size(), 0.0);

    switch (layer.kind) {
        case LayerKind::FullyConnected: {
            for (int s = 0; s < n; ++s) {
                const double* gz = g_out.data() + static_cast<int64_t>(s) * layer.out_ch;
                const float* xr = x.data() + static_cast<int64_t>(s) * layer.in_ch;
                double* gi = g_in.data() + static_cast<int64_t>(s) * layer.in_ch;
                for (int o = 0; o < layer.out_ch; ++o) {
                    const double go = gz[o];
                    if (go == 0.0) continue;
                    const float* wr = layer.weights.data() + static_cast<int64_t>(o) * layer.in_ch;
                    double* gwr = gw.data() + static_cast<int64_t>(o) * layer.in_ch;
                    for (int i = 0; i < layer.in_ch; ++i) {
                        gwr[i] += go * xr[i];
                        gi[i] += go * wr[i];
                    }
                    if (!gb.empty()) gb[static_cast<size_t>(o)] += go;
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
                            const double go = g_out[static_cast<size_t>(zi)];
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
                                        gw[static_cast<size_t>(wi)] += go * x[static_cast<size_t>(xi)];
                                        g_in[static_cast<size_t>(xi)] +=
                                            go * layer.weights[static_cast<size_t>(wi)];
                                    }
                                }
                            }
                            if (!gb.empty()) gb[static_cast<size_t>(co)] += go;
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::GlobalAvgPool: {
            const double inv_hw = 1.0 / (static_cast<double>(layer.in_h) * layer.in_w);
            const int64_t hw = static_cast<int64_t>(layer.in_h) * layer.in_w;
            for (int s = 0; s < n; ++s) {
                for (int c = 0; c < layer.in_ch; ++c) {
                    const double go =
                        g_out[static_cast<size_t>(static_cast<int64_t>(s) * layer.out_ch + c)] * inv_hw;
                    double* gi = g_in.data() + (static_cast<int64_t>(s) * layer.in_ch + c) * hw;
                    for (int64_t p = 0; p < hw; ++p) gi[p] += go;
                }
            }
            break;
        }
    }
    return g_in;
}

}  // namespace

FpGrads bp_grad_fp(const FpModel& fp, const std::vector<float>& inputs, int n,
                   const std::vector<int>& labels) {
    if (n < 1 || static_cast<int>(labels.size()) != n) {
        throw std::invalid_argument("bp_grad_fp: bad batch");
    }
    const FpForwardCache cache = fp_forward(fp, inputs, n, &labels);
    FpGrads grads;
    grads.w.resize(fp.layers.size());
    grads.b.resize(fp.layers.size());
    std::vector<double> g = ce_backward(cache.logits, n, fp.num_classes, labels);
    for (int i = static_cast<int>(fp.layers.size()) - 1; i >= 0; --i) {
        const size_t ui = static_cast<size_t>(i);
        g = layer_backward(fp.layers[ui], cache.acts[ui], cache.preacts[ui], n,
                           std::move(g), grads.w[ui], grads.b[ui]);
    }
    return grads;
}

namespace {

// Double-precision mirror used only by the finite-difference oracle, so the
// h-division is not swamped by float32 forward noise.
struct DLayer {
    const FpLayer* spec;
    std::vector<double> weights, bias;
};

std::vector<double> d_layer_forward(const DLayer& dl, const std::vector<double>& x,
                                    int n) {
    const FpLayer& l = *dl.spec;
    const int64_t out_per = static_cast<int64_t>(l.out_ch) * l.out_h * l.out_w;
    std::vector<double> z(static_cast<size_t>(n) * static_cast<size_t>(out_per), 0.0);
    switch (l.kind) {
        case LayerKind::FullyConnected:
            for (int s = 0; s < n; ++s) {
                for (int o = 0; o < l.out_ch; ++o) {
                    double acc = dl.bias.empty() ? 0.0 : dl.bias[static_cast<size_t>(o)];
                    for (int i = 0; i < l.in_ch; ++i) {
                        acc += dl.weights[static_cast<size_t>(o) * l.in_ch + i] *
                               x[static_cast<size_t>(s) * l.in_ch + i];
                    }
                    z[static_cast<size_t>(s) * l.out_ch + o] = acc;
                }
            }
            break;
        case LayerKind::Conv2d:
        case LayerKind::DepthwiseConv2d: {
            const bool dw = l.kind == LayerKind::DepthwiseConv2d;
            for (int s = 0; s < n; ++s) {
                for (int co = 0; co < l.out_ch; ++co) {
                    for (int oy = 0; oy < l.out_h; ++oy) {
                        for (int ox = 0; ox < l.out_w; ++ox) {
                            double acc = dl.bias.empty() ? 0.0 : dl.bias[static_cast<size_t>(co)];
                            const int ci_lo = dw ? co : 0;
                            const int ci_hi = dw ? co + 1 : l.in_ch;
                            for (int ci = ci_lo; ci < ci_hi; ++ci) {
                                for (int ky = 0; ky < l.kh; ++ky) {
                                    const int iy = oy * l.stride + ky - l.pad;
                                    if (iy < 0 || iy >= l.in_h) continue;
                                    for (int kx = 0; kx < l.kw; ++kx) {
                                        const int ix = ox * l.stride + kx - l.pad;
                                        if (ix < 0 || ix >= l.in_w) continue;
                                        const int64_t xi =
                                            ((static_cast<int64_t>(s) * l.in_ch + ci) * l.in_h + iy) *
                                                l.in_w + ix;
                                        const int64_t wi =
                                            dw ? (static_cast<int64_t>(co) * l.kh + ky) * l.kw + kx
                                               : ((static_cast<int64_t>(co) * l.in_ch + ci) * l.kh + ky) *
                                                         l.kw + kx;
                                        acc += dl.weights[static_cast<size_t>(wi)] *
                                               x[static_cast<size_t>(xi)];
                                    }
                                }
                            }
                            z[static_cast<size_t>(((static_cast<int64_t>(s) * l.out_ch + co) * l.out_h + oy) *
                                                  l.out_w + ox)] = acc;
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::GlobalAvgPool: {
            const int64_t hw = static_cast<int64_t>(l.in_h) * l.in_w;
            for (int s = 0; s < n; ++s) {
                for (int c = 0; c < l.in_ch; ++c) {
                    double acc = 0.0;
                    for (int64_t p = 0; p < hw; ++p) {
                        acc += x[static_cast<size_t>((static_cast<int64_t>(s) * l.in_ch + c) * hw + p)];
                    }
                    z[static_cast<size_t>(s) * l.out_ch + c] = acc / static_cast<double>(hw);
                }
            }
            break;
        }
    }
    if (l.act == Activation::Relu) {
        for (auto& v : z) v = v > 0.0 ? v : 0.0;
    }
    return z;
}

double d_mean_loss(const std::vector<DLayer>& layers, int num_classes,
                   const std::vector<double>& inputs, int n,
                   const std::vector<int>& labels) {
    std::vector<double> a = inputs;
    for (const auto& dl : layers) a = d_layer_forward(dl, a, n);
    double sum = 0.0;
    for (int s = 0; s < n; ++s) {
        const double* row = a.data() + static_cast<int64_t>(s) * num_classes;
        double mx = row[0];
        for (int j = 1; j < num_classes; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int j = 0; j < num_classes; ++j) denom += std::exp(row[j] - mx);
        sum += -(row[labels[static_cast<size_t>(s)]] - mx - std::log(denom));
    }
    return sum / n;
}

}  // namespace

FpGrads finite_diff_grad(const FpModel& fp, const std::vector<float>& inputs, int n,
                         const std::vector<int>& labels, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
    std::vector<DLayer> layers;
    for (const auto& l : fp.layers) {
        DLayer dl;
        dl.spec = &l;
        dl.weights.assign(l.weights.begin(), l.weights.end());
        dl.bias.assign(l.bias.begin(), l.bias.end());
        layers.push_back(std::move(dl));
    }
    const std::vector<double> x(inputs.begin(), inputs.end());
    const auto mean_loss = [&]() {
        return d_mean_loss(layers, fp.num_classes, x, n, labels);
    };
    FpGrads grads;
    grads.w.resize(fp.layers.size());
    grads.b.resize(fp.layers.size());
    for (size_t li = 0; li < fp.layers.size(); ++li) {
        const auto diff_over = [&](std::vector<double>& params, std::vector<double>& out) {
            out.assign(params.size(), 0.0);
            for (size_t j = 0; j < params.size(); ++j) {
                const double orig = params[j];
                params[j] = orig + h;
                const double up = mean_loss();
                params[j] = orig - h;
                const double down = mean_loss();
                params[j] = orig;
                out[j] = (up - down) / (2.0 * h);
            }
        };
        diff_over(layers[li].weights, grads.w[li]);
        diff_over(layers[li].bias, grads.b[li]);
    }
    return grads;
}

double cosine_similarity(const std::vector<double>& g, const std::vector<double>& h) {
    if (g.size() != h.size()) {
        throw std::invalid_argument("cosine_similarity: length mismatch");
    }
    double dot = 0.0, ng = 0.0, nh = 0.0;
    for (size_t i = 0; i < g.size(); ++i) {
        dot += g[i] * h[i];
        ng += g[i] * g[i];
        nh += h[i] * h[i];
    }
    if (ng == 0.0 && nh == 0.0) return 0.0;
    if (ng == 0.0 || nh == 0.0) return 0.0;
    return dot / (std::sqrt(ng) * std::sqrt(nh));
}

std::vector<double> flatten_grads(const FpGrads& g) {
    std::vector<double> out;
    for (size_t i = 0; i < g.w.size(); ++i) {
        out.insert(out.end(), g.w[i].begin(), g.w[i].end());
        out.insert(out.end(), g.b[i].begin(), g.b[i].end());
    }
    return out;
}

std::string VarianceReport::csv_header() {
    return "d,n,q,mu,sigma,trials,S,V,theory_grad,theory_noise,theory_mse,"
           "empirical_mse,rel_dev";
}

std::string VarianceReport::to_csv_row() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "%d,%d,%d,%g,%g,%lld,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g,%.6f", d, n, q,
                  mu, sigma, static_cast<long long>(trials), s_term, v_term,
                  theory_grad_term, theory_noise_term, theoretical_mse,
                  empirical_mse, relative_deviation);
    return buf;
}

VarianceReport variance_report(int d, int n, int q, double mu, double sigma,
                               int64_t trials, uint64_t seed) {
    if (d < 1 || n < 1 || q < 1 || trials < 1 || !(mu > 0.0) || sigma < 0.0) {
        throw std::invalid_argument("variance_report: bad arguments");
    }
    // Fixed theta ~ N(0, I) from the seed.
    std::vector<double> theta(static_cast<size_t>(d));
    {
        std::mt19937_64 gen(seed);
        std::normal_distribution<double> nd(0.0, 1.0);
        for (auto& t : theta) t = nd(gen);
    }
    double s_val = 0.0;
    for (double t : theta) s_val += t * t;
    const double v_val = static_cast<double>(d) * sigma * sigma;
    const double nq = static_cast<double>(n) * q;

    std::vector<double> trial_mse(static_cast<size_t>(trials), 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t t = 0; t < trials; ++t) {
        std::mt19937_64 gen(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(t + 1)));
        std::normal_distribution<double> nd(0.0, sigma);
        std::vector<double> ghat(static_cast<size_t>(d), 0.0);
        std::vector<double> xi(static_cast<size_t>(d));
        for (int64_t k = 0; k < static_cast<int64_t>(nq); ++k) {
            double dot_tx = 0.0, dot_xx = 0.0;
            for (int j = 0; j < d; ++j) {
                xi[static_cast<size_t>(j)] = (gen() & 1u) ? -1.0 : 1.0;
                dot_tx += theta[static_cast<size_t>(j)] * xi[static_cast<size_t>(j)];
            }
            if (sigma > 0.0) {
                for (int j = 0; j < d; ++j) dot_xx += nd(gen) * xi[static_cast<size_t>(j)];
            }
            // l(theta + mu xi; x) - l(theta; x)
            //   = mu theta.xi + mu^2 d / 2 + mu x.xi
            const double diff =
                mu * dot_tx + 0.5 * mu * mu * d + mu * dot_xx;
            const double coef = diff / (nq * mu);
            for (int j = 0; j < d; ++j) ghat[static_cast<size_t>(j)] += coef * xi[static_cast<size_t>(j)];
        }
        double err = 0.0;
        for (int j = 0; j < d; ++j) {
            const double e = ghat[static_cast<size_t>(j)] - theta[static_cast<size_t>(j)];
            err += e * e;
        }
        trial_mse[static_cast<size_t>(t)] = err;
    }
    double mse = 0.0;
    for (double e : trial_mse) mse += e;
    mse /= static_cast<double>(trials);

    VarianceReport r;
    r.d = d;
    r.n = n;
    r.q = q;
    r.mu = mu;
    r.sigma = sigma;
    r.trials = trials;
    r.s_term = s_val;
    r.v_term = v_val;
    r.theory_grad_term = (d - 1.0) / nq * s_val;
    r.theory_noise_term = static_cast<double>(d) / nq * v_val;
    r.theoretical_mse = r.theory_grad_term + r.theory_noise_term;
    r.empirical_mse = mse;
    r.relative_deviation = r.theoretical_mse > 0.0
                               ? std::abs(mse - r.theoretical_mse) / r.theoretical_mse
                               : mse;
    return r;
}

}  // namespace qzo
