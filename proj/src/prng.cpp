#include "qzo/prng.hpp"

#include <stdexcept>

namespace qzo {

uint32_t xorshift32_step(uint32_t s) {
    s ^= s << 13;
    s ^= s >> 17;
    s ^= s << 5;
    return s;
}

XorShift32::XorShift32(uint32_t seed) : state_(seed) {
    if (seed == 0) {
        throw std::invalid_argument("XorShift32: zero seed is absorbing");
    }
}

uint32_t XorShift32::next() {
    state_ = xorshift32_step(state_);
    return state_;
}

std::vector<int32_t> rademacher_fill(uint32_t seed, int64_t n) {
    if (n < 0) throw std::invalid_argument("rademacher_fill: negative length");
    XorShift32 gen(seed);
    std::vector<int32_t> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        out[static_cast<size_t>(i)] = gen.next_rademacher();
    }
    return out;
}

uint32_t derive_seed(uint32_t base_seed, int layer, int query, int sample) {
    if (base_seed == 0) throw std::invalid_argument("derive_seed: zero base seed");
    const uint32_t packed = (static_cast<uint32_t>(layer & 0xff) << 24) |
                            (static_cast<uint32_t>(query & 0xffff) << 8) |
                            static_cast<uint32_t>(sample & 0xff);
    uint32_t s = base_seed ^ packed;
    if (s == 0) s = 1;
    s = xorshift32_step(s);
    if (s == 0) s = 1;
    return s;
}

uint32_t derive_step_seed(uint32_t base_seed, int64_t step) {
    if (base_seed == 0) throw std::invalid_argument("derive_step_seed: zero base seed");
    uint32_t s = base_seed ^ static_cast<uint32_t>(step * 2654435761u + 1u);
    if (s == 0) s = 1;
    s = xorshift32_step(s);
    if (s == 0) s = 1;
    return s;
}

}  // namespace qzo
