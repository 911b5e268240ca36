#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace pbrgen {

inline constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr uint64_t kFnvPrime = 0x100000001b3ull;

inline uint64_t fnv1a64(const void* bytes, size_t n, uint64_t seed = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    uint64_t h = seed;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

inline uint64_t fnv1a64(std::string_view s, uint64_t seed = kFnvOffset) {
    return fnv1a64(s.data(), s.size(), seed);
}

// splitmix64 finalizer; also used to derive child seeds.
inline uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Deterministic counter-free generator. Identical seeds give identical
// sequences on every platform; fork() derives independent child streams
// without advancing the parent.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix64(state_);
    }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    float next_float() { return static_cast<float>(next_double()); }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Unbiased integer in [0, n). Rejection sampling keeps it exact.
    uint64_t next_below(uint64_t n) {
        const uint64_t threshold = n == 0 ? 0 : (0 - n) % n;
        for (;;) {
            const uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Standard normal via Box-Muller; caches the spare draw.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; // (0, 1]
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    float normalf() { return static_cast<float>(normal()); }

    // Child stream keyed by an integer label. Stable: does not consume from
    // or perturb this generator.
    Rng fork(uint64_t stream) const {
        return Rng(mix64(state_ ^ (0xa0761d6478bd642full * (stream + 1))));
    }

    Rng fork(std::string_view label) const { return fork(fnv1a64(label)); }

    uint64_t state() const { return state_; }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace pbrgen
