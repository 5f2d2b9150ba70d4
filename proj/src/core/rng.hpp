#pragma once

#include <cstdint>

namespace masknet {

// splitmix64 step; expands user seeds into stream state.
inline uint64_t splitmix64_next(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives an independent seed for a named sub-stream (epoch, class index, ...).
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
    uint64_t s = base ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    splitmix64_next(s);
    return splitmix64_next(s);
}

// xoshiro256** seeded via splitmix64. Bit-exact to the reference algorithm,
// so seeded sequences reproduce across platforms and builds.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& word : s_) word = splitmix64_next(sm);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // [0,1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // [0,1) with 24 random bits.
    float next_float() {
        return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
    }

    float uniform(float lo, float hi) {
        return lo + (hi - lo) * next_float();
    }

    // Uniform integer in [0, n). n must be nonzero.
    uint64_t next_below(uint64_t n) {
        return next_u64() % n;
    }

    int uniform_int(int lo, int hi) { // inclusive bounds
        return lo + static_cast<int>(next_below(static_cast<uint64_t>(hi - lo + 1)));
    }

private:
    static uint64_t rotl(uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    uint64_t s_[4];
};

} // namespace masknet
