#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace wassdiff {

// SplitMix64 step. Used to expand seeds and to derive independent streams.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic child-seed derivation for fan-out (ensemble members,
// per-step projection draws, ...).
inline uint64_t derive_seed(uint64_t base, uint64_t tag, uint64_t index = 0) {
    uint64_t s = base;
    (void)splitmix64(s);
    s ^= tag + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
    (void)splitmix64(s);
    s ^= index + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
    return splitmix64(s);
}

// xoshiro256++ with SplitMix64 stream derivation. Integer-only state
// transitions, so sequences are identical on every platform. Streams are
// keyed by (seed, tag...) so each consumer of randomness (data draws, noise
// draws, projections, ...) owns an independent, reproducible sequence.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    Rng(uint64_t seed, std::initializer_list<uint64_t> tags) {
        uint64_t sm = seed;
        (void)splitmix64(sm);
        for (uint64_t tag : tags) {
            sm ^= tag + 0x9e3779b97f4a7c15ULL + (sm << 6) + (sm >> 2);
            (void)splitmix64(sm);
        }
        for (auto& word : state_) word = splitmix64(sm);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n).
    uint64_t uniform_index(uint64_t n) {
        // Multiply-shift with rejection of the biased tail.
        uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            __uint128_t m = static_cast<__uint128_t>(r) * n;
            if (static_cast<uint64_t>(m) >= threshold)
                return static_cast<uint64_t>(m >> 64);
        }
    }

    // Standard normal via the Marsaglia polar method; caches the paired draw.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double factor = std::sqrt(-2.0 * std::log(s) / s);
        cached_ = v * factor;
        has_cached_ = true;
        return u * factor;
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4];
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace wassdiff
