#include "qzo/profiler.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "qzo/zo.hpp"

namespace qzo {

const char* profile_method_name(ProfileMethod m) {
    switch (m) {
        case ProfileMethod::Inference: return "inference";
        case ProfileMethod::WpVanilla: return "WP-vanilla";
        case ProfileMethod::WpEfficient: return "WP-efficient";
        case ProfileMethod::NpVanilla: return "NP-vanilla";
        case ProfileMethod::NpEfficient: return "NP-efficient";
        case ProfileMethod::Bp: return "BP";
    }
    return "?";
}

int64_t analytic_memory(int64_t l, int64_t d_a, int64_t d_w, int64_t n, int64_t q,
                        ProfileMethod method) {
    if (l < 1 || d_a < 1 || d_w < 1 || n < 1 || q < 1) {
        throw std::invalid_argument("analytic_memory: arguments must be >= 1");
    }
    switch (method) {
        case ProfileMethod::Inference: return n * (2 * d_a + d_w);
        case ProfileMethod::WpVanilla: return l * d_w;
        case ProfileMethod::WpEfficient: return l * q;
        case ProfileMethod::NpVanilla: return n * l * d_a + l * d_w;
        case ProfileMethod::NpEfficient: return n * l * q + d_w;
        case ProfileMethod::Bp: return n * l * d_a + l * d_w;
    }
    throw std::invalid_argument("analytic_memory: unknown method");
}

int64_t analytic_memory_bytes(int64_t l, int64_t d_a, int64_t d_w, int64_t n,
                              int64_t q, ProfileMethod method) {
    // Activations/weights/perturbation signs are 8-bit (1 byte); the Q stored
    // loss scalars of the seed-replay variants are 32-bit (4 bytes).
    switch (method) {
        case ProfileMethod::WpEfficient:
            return 4 * l * q;
        case ProfileMethod::NpEfficient:
            return 4 * n * l * q + d_w;
        default:
            return analytic_memory(l, d_a, d_w, n, q, method);
    }
}

int64_t mac_count(const QModel& model, ProfileMethod method, int64_t n, int64_t q) {
    if (n < 1 || q < 1) throw std::invalid_argument("mac_count: n, q must be >= 1");
    int64_t fwd = 0;
    for (const auto& layer : model.layers) fwd += layer.forward_macs();
    switch (method) {
        case ProfileMethod::Inference:
            return n * fwd;
        case ProfileMethod::WpVanilla:
        case ProfileMethod::WpEfficient:
        case ProfileMethod::NpVanilla:
        case ProfileMethod::NpEfficient:
            return n * fwd + n * q * fwd;
        case ProfileMethod::Bp:
            return n * fwd + 2 * n * fwd;
    }
    throw std::invalid_argument("mac_count: unknown method");
}

int64_t predicted_forward_evals(const QModel& model, int n, int total_queries,
                                bool /*share_wp_across_batch*/,
                                bool /*per_sample_np*/, int perturb_mode) {
    // Every estimation path evaluates each sample once per query, so the
    // count is N (clean) + N * (effective total queries), regardless of
    // whether perturbations are shared across the batch.
    const auto trainables = model.trainable_layers();
    int64_t effective_q;
    if (perturb_mode == static_cast<int>(PerturbMode::ModelWP)) {
        effective_q = total_queries;
    } else {
        effective_q = static_cast<int64_t>(trainables.size()) *
                      per_layer_queries(total_queries,
                                        static_cast<int>(trainables.size()));
    }
    return static_cast<int64_t>(n) * (1 + effective_q);
}

std::string ProfileReport::to_csv() const {
    std::string out = "method,memory_elems,memory_bytes,forward_evals,macs\n";
    char line[192];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%s,%lld,%lld,%lld,%lld\n",
                      r.method.c_str(), static_cast<long long>(r.memory_elems),
                      static_cast<long long>(r.memory_bytes),
                      static_cast<long long>(r.forward_evals),
                      static_cast<long long>(r.macs));
        out += line;
    }
    return out;
}

std::string ProfileReport::to_table() const {
    std::string out;
    char line[192];
    std::snprintf(line, sizeof(line), "%-14s %14s %14s %12s %16s\n", "method",
                  "mem (elems)", "mem (bytes)", "forwards", "MACs");
    out += line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%-14s %14lld %14lld %12lld %16lld\n",
                      r.method.c_str(), static_cast<long long>(r.memory_elems),
                      static_cast<long long>(r.memory_bytes),
                      static_cast<long long>(r.forward_evals),
                      static_cast<long long>(r.macs));
        out += line;
    }
    return out;
}

ProfileReport profile_model(const QModel& model, int n, int q) {
    int64_t l = 0, max_da = 1, max_dw = 1;
    for (const auto& layer : model.layers) {
        if (!layer.has_params()) continue;
        ++l;
        max_da = std::max(max_da, layer.d_a());
        max_dw = std::max(max_dw, layer.d_w());
    }
    if (l == 0) throw std::invalid_argument("profile_model: no parameterized layers");
    ProfileReport report;
    const ProfileMethod methods[] = {
        ProfileMethod::Inference,  ProfileMethod::WpVanilla,
        ProfileMethod::WpEfficient, ProfileMethod::NpVanilla,
        ProfileMethod::NpEfficient, ProfileMethod::Bp,
    };
    for (ProfileMethod m : methods) {
        ProfileRow row;
        row.method = profile_method_name(m);
        row.memory_elems = analytic_memory(l, max_da, max_dw, n, q, m);
        row.memory_bytes = analytic_memory_bytes(l, max_da, max_dw, n, q, m);
        row.forward_evals =
            m == ProfileMethod::Inference || m == ProfileMethod::Bp
                ? n
                : static_cast<int64_t>(n) * (1 + q);
        row.macs = mac_count(model, m, n, q);
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace qzo
