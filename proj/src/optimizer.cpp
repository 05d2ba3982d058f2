#include "qzo/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qzo {

double gns_factor(int64_t n, int64_t q, int64_t d) {
    if (n < 1 || q < 1 || d < 1) {
        throw std::invalid_argument("gns_factor: arguments must be >= 1");
    }
    const double nq = static_cast<double>(n) * static_cast<double>(q);
    return nq / (nq + static_cast<double>(d) - 1.0);
}

double qas_factor(double s) {
    if (!(s > 0.0)) throw std::invalid_argument("qas_factor: nonpositive scale");
    return 1.0 / (s * s);
}

double cosine_lr(int64_t t, int64_t t_total, double eta0) {
    if (t < 0 || t > t_total) throw std::invalid_argument("cosine_lr: t out of range");
    return eta0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) /
                                  static_cast<double>(t_total))) / 2.0;
}

void apply_update(QTensor& theta, const std::vector<double>& grad, double eta,
                  int64_t n, int64_t q, int64_t d, double s_theta) {
    if (static_cast<int64_t>(grad.size()) != theta.size()) {
        throw std::invalid_argument("apply_update: gradient shape mismatch");
    }
    const double step_scale = gns_factor(n, q, d) * qas_factor(s_theta) * eta;
    const int64_t lo = theta.qmin(), hi = theta.qmax();
    for (size_t i = 0; i < grad.size(); ++i) {
        const double updated = static_cast<double>(theta.data[i]) - step_scale * grad[i];
        int64_t v = round_half_away(updated);
        if (v < lo) v = lo;
        if (v > hi) v = hi;
        theta.data[i] = static_cast<int32_t>(v);
    }
}

}  // namespace qzo
