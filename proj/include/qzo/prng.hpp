#pragma once

#include <cstdint>
#include <vector>

namespace qzo {

// 32-bit XORShift generator (shift constants 13/17/5). The zero state is
// absorbing and therefore rejected.
class XorShift32 {
public:
    explicit XorShift32(uint32_t seed);

    uint32_t next();
    uint32_t state() const { return state_; }

    // +1 / -1 from the least significant bit of the next draw:
    // LSB 1 -> -1, LSB 0 -> +1.
    int32_t next_rademacher() { return (next() & 1u) ? -1 : 1; }

private:
    uint32_t state_;
};

// Single stateless XORShift step.
uint32_t xorshift32_step(uint32_t s);

// Deterministic +/-1 vector of length n from `seed`. Same seed, same vector.
std::vector<int32_t> rademacher_fill(uint32_t seed, int64_t n);

// Effective seed for a (layer, query, sample) tuple: the tuple is packed
// injectively (layer < 2^8, query < 2^16, sample < 2^8), XORed into the base
// seed and passed through one xorshift step. Zero results map to 1.
uint32_t derive_seed(uint32_t base_seed, int layer, int query, int sample);

// Per-iteration stream base so distinct training steps consume distinct seeds.
uint32_t derive_step_seed(uint32_t base_seed, int64_t step);

}  // namespace qzo
