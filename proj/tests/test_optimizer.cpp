#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qzo/optimizer.hpp"

using namespace qzo;

TEST_CASE("gns_factor values and monotonicity") {
    CHECK(gns_factor(1, 1, 1) == doctest::Approx(1.0));
    CHECK(gns_factor(10, 10, 101) == doctest::Approx(0.5));
    CHECK(gns_factor(1, 100, 1) == doctest::Approx(1.0));
    double prev = 2.0;
    for (int d = 1; d <= 1000; d *= 10) {
        const double v = gns_factor(4, 5, d);
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
        CHECK(v < prev);
        prev = v;
    }
    CHECK_THROWS_AS(gns_factor(0, 1, 1), std::invalid_argument);
}

TEST_CASE("qas_factor") {
    CHECK(qas_factor(1.0) == doctest::Approx(1.0));
    CHECK(qas_factor(0.5) == doctest::Approx(4.0));
    CHECK(qas_factor(0.1) == doctest::Approx(100.0));
    CHECK_THROWS_AS(qas_factor(0.0), std::invalid_argument);
    CHECK_THROWS_AS(qas_factor(-1.0), std::invalid_argument);
}

TEST_CASE("cosine_lr endpoints and midpoint") {
    CHECK(cosine_lr(0, 100, 0.01) == doctest::Approx(0.01));
    CHECK(cosine_lr(100, 100, 0.01) == doctest::Approx(0.0));
    CHECK(cosine_lr(50, 100, 0.01) == doctest::Approx(0.005));
    CHECK_THROWS_AS(cosine_lr(101, 100, 0.01), std::invalid_argument);
}

TEST_CASE("apply_update: round(7.6) = 8 per Eq.(10)") {
    QTensor theta;
    theta.data = {10};
    theta.shape = {1};
    theta.scale = 1.0f;
    theta.bitwidth = 8;
    theta.is_signed = true;
    // gns(1,1,1) = 1, qas(1) = 1, eta = 2.4, g = 1 -> 10 - 2.4 = 7.6 -> 8.
    apply_update(theta, {1.0}, 2.4, 1, 1, 1, 1.0);
    CHECK(theta.data[0] == 8);
}

TEST_CASE("apply_update clips at the lower bound and ignores zero gradients") {
    QTensor theta;
    theta.data = {-128, 50};
    theta.shape = {2};
    theta.scale = 1.0f;
    theta.bitwidth = 8;
    theta.is_signed = true;
    apply_update(theta, {5.0, 0.0}, 1.0, 1, 1, 1, 1.0);
    CHECK(theta.data[0] == -128);
    CHECK(theta.data[1] == 50);

    QTensor up = theta;
    apply_update(up, {-1000.0, 0.0}, 1.0, 1, 1, 1, 1.0);
    CHECK(up.data[0] == 127);

    CHECK_THROWS_AS(apply_update(theta, {1.0}, 1.0, 1, 1, 1, 1.0),
                    std::invalid_argument);
}

TEST_CASE("QAS tracking: quantized update follows fp update within s/2") {
    // theta = s * theta_bar; ghat = s * g_theta. One update with lr eta/s^2
    // (the qas factor) must track theta - eta g_theta within s/2.
    const double s = 0.07, eta = 0.3;
    for (int tb = -100; tb <= 100; tb += 7) {
        for (double g : {-1.3, -0.2, 0.0, 0.4, 2.1}) {
            QTensor theta;
            theta.data = {tb};
            theta.shape = {1};
            theta.scale = static_cast<float>(s);
            theta.bitwidth = 8;
            theta.is_signed = true;
            apply_update(theta, {s * g}, eta, 1, 1, 1, s);
            const double fp_target = s * tb - eta * g;
            if (std::abs(fp_target) < 127 * s) {  // no clipping
                CHECK(std::abs(s * theta.data[0] - fp_target) <= s / 2 + 1e-12);
            }
        }
    }
}
