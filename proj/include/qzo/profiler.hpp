#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qzo/model.hpp"

namespace qzo {

enum class ProfileMethod {
    Inference,
    WpVanilla,
    WpEfficient,
    NpVanilla,
    NpEfficient,
    Bp,
};

const char* profile_method_name(ProfileMethod m);

// Closed-form training-memory element counts:
//   inference     N (2 d_a + d_w)
//   WP vanilla    L d_w
//   WP efficient  L Q
//   NP vanilla    N L d_a + L d_w
//   NP efficient  N L Q + d_w
//   BP            N L d_a + L d_w
int64_t analytic_memory(int64_t l, int64_t d_a, int64_t d_w, int64_t n, int64_t q,
                        ProfileMethod method);

// Same count in bytes: 8-bit elements for activations/weights/perturbation
// state, 4 bytes per stored loss/seed scalar in the efficient variants.
int64_t analytic_memory_bytes(int64_t l, int64_t d_a, int64_t d_w, int64_t n,
                              int64_t q, ProfileMethod method);

// MACs per iteration. ZO methods: N clean forwards plus NQ perturbed
// forwards; BP: N forwards plus a 2x-forward backward.
int64_t mac_count(const QModel& model, ProfileMethod method, int64_t n, int64_t q);

// Forward-evaluation count the engine will report for one train_step:
// N clean + per-layer query evaluations. Matches StepReport.forward_evals.
int64_t predicted_forward_evals(const QModel& model, int n, int total_queries,
                                bool share_wp_across_batch, bool per_sample_np,
                                int perturb_mode);

struct ProfileRow {
    std::string method;
    int64_t memory_elems = 0;
    int64_t memory_bytes = 0;
    int64_t forward_evals = 0;
    int64_t macs = 0;
};

struct ProfileReport {
    std::vector<ProfileRow> rows;

    std::string to_csv() const;
    std::string to_table() const;
};

// Full six-method report for a concrete model with per-layer maxima feeding
// the closed forms (L = parameterized layer count, d_a / d_w = per-layer
// maxima).
ProfileReport profile_model(const QModel& model, int n, int q);

}  // namespace qzo
