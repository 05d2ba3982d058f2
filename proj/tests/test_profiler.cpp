#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "qzo/profiler.hpp"
#include "qzo/zo.hpp"

using namespace qzo;

TEST_CASE("Table-3 closed forms on the spec instances") {
    // (L=2, d_a=4, d_w=16, N=1, Q=3)
    CHECK(analytic_memory(2, 4, 16, 1, 3, ProfileMethod::Inference) == 24);
    CHECK(analytic_memory(2, 4, 16, 1, 3, ProfileMethod::NpEfficient) == 22);
    CHECK(analytic_memory(2, 4, 16, 1, 3, ProfileMethod::Bp) == 40);
    CHECK(analytic_memory(2, 4, 16, 1, 3, ProfileMethod::WpVanilla) == 32);
    CHECK(analytic_memory(2, 4, 16, 1, 3, ProfileMethod::WpEfficient) == 6);
    CHECK(analytic_memory(2, 4, 16, 1, 3, ProfileMethod::NpVanilla) == 40);
    CHECK_THROWS_AS(analytic_memory(0, 4, 16, 1, 3, ProfileMethod::Bp),
                    std::invalid_argument);
}

TEST_CASE("Table-3 formulas on a randomized grid, efficient <= vanilla") {
    std::mt19937 gen(51);
    for (int rep = 0; rep < 200; ++rep) {
        const int64_t l = 1 + gen() % 12;
        const int64_t da = 1 + gen() % 512;
        const int64_t dw = 1 + gen() % 4096;
        const int64_t n = 1 + gen() % 64;
        const int64_t q = 1 + gen() % 128;
        CHECK(analytic_memory(l, da, dw, n, q, ProfileMethod::Inference) ==
              n * (2 * da + dw));
        CHECK(analytic_memory(l, da, dw, n, q, ProfileMethod::WpVanilla) == l * dw);
        CHECK(analytic_memory(l, da, dw, n, q, ProfileMethod::WpEfficient) == l * q);
        CHECK(analytic_memory(l, da, dw, n, q, ProfileMethod::NpVanilla) ==
              n * l * da + l * dw);
        CHECK(analytic_memory(l, da, dw, n, q, ProfileMethod::NpEfficient) ==
              n * l * q + dw);
        CHECK(analytic_memory(l, da, dw, n, q, ProfileMethod::Bp) ==
              n * l * da + l * dw);
        // Efficient never exceeds vanilla when Q <= d (the seed-replay premise).
        if (q <= dw) {
            CHECK(analytic_memory(l, da, dw, n, q, ProfileMethod::WpEfficient) <=
                  analytic_memory(l, da, dw, n, q, ProfileMethod::WpVanilla));
        }
        if (q <= da) {
            CHECK(analytic_memory(l, da, dw, n, q, ProfileMethod::NpEfficient) <=
                  analytic_memory(l, da, dw, n, q, ProfileMethod::NpVanilla));
        }
    }
}

TEST_CASE("memory monotonicity in every participating argument") {
    for (ProfileMethod m : {ProfileMethod::Inference, ProfileMethod::WpVanilla,
                            ProfileMethod::WpEfficient, ProfileMethod::NpVanilla,
                            ProfileMethod::NpEfficient, ProfileMethod::Bp}) {
        const int64_t base = analytic_memory(3, 10, 20, 4, 5, m);
        CHECK(analytic_memory(4, 10, 20, 4, 5, m) >= base);
        CHECK(analytic_memory(3, 11, 20, 4, 5, m) >= base);
        CHECK(analytic_memory(3, 10, 21, 4, 5, m) >= base);
        CHECK(analytic_memory(3, 10, 20, 5, 5, m) >= base);
        CHECK(analytic_memory(3, 10, 20, 4, 6, m) >= base);
    }
}

TEST_CASE("MAC counts: single FC 4->2 spec examples") {
    QModel m;
    m.in_ch = 4;
    m.num_classes = 2;
    LayerSpec l;
    l.kind = LayerKind::FullyConnected;
    l.in_ch = 4;
    l.out_ch = 2;
    l.weights.data.assign(8, 1);
    l.weights.shape = {2, 4};
    l.bias.data.assign(2, 0);
    l.bias.shape = {2};
    l.bias.bitwidth = 32;
    m.layers.push_back(l);
    m.block_of = {0};

    CHECK(mac_count(m, ProfileMethod::Inference, 1, 1) == 8);
    CHECK(mac_count(m, ProfileMethod::WpEfficient, 1, 5) == 48);
    CHECK(mac_count(m, ProfileMethod::Bp, 1, 1) == 24);
}

TEST_CASE("engine forward counts match the profiler prediction") {
    auto toy = testutil::quantized_mlp({6, 8, 8, 2}, 32, 52);
    const Batch batch = testutil::first_batch(toy.model, toy.train, 8);
    for (PerturbMode mode : {PerturbMode::Adaptive, PerturbMode::LayerWP,
                             PerturbMode::LayerNP, PerturbMode::ModelWP}) {
        PerturbConfig pcfg;
        pcfg.mode = mode;
        pcfg.queries = 10;
        pcfg.base_seed = 4;
        QModel work = toy.model;
        const StepReport r = train_step(work, batch, pcfg, 0.01, batch.n(), 0);
        const int64_t predicted = predicted_forward_evals(
            toy.model, batch.n(), pcfg.queries, pcfg.share_wp_across_batch,
            pcfg.per_sample_np, static_cast<int>(mode));
        CHECK(r.forward_evals == predicted);
    }
}

TEST_CASE("profile_model report is well-formed") {
    auto toy = testutil::quantized_mlp({6, 8, 8, 2}, 32, 53);
    const ProfileReport report = profile_model(toy.model, 4, 10);
    REQUIRE(report.rows.size() == 6);
    for (const auto& row : report.rows) {
        CHECK(row.memory_elems > 0);
        CHECK(row.memory_bytes > 0);
        CHECK(row.macs > 0);
    }
    const std::string csv = report.to_csv();
    CHECK(csv.rfind("method,memory_elems,memory_bytes,forward_evals,macs\n", 0) == 0);
}
