#pragma once

#include <cstdint>

namespace markerforge {

// SplitMix64 generator. Chosen over std::mt19937 + distributions because the
// standard distributions are implementation-defined; this keeps every sampled
// byte identical across compilers and standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random mantissa bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi). Degenerate ranges (lo == hi) return lo exactly.
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) {
        // Rejection-free multiply-shift; bias below 2^-64 is irrelevant here.
        // (Lemire's method without the rejection step.)
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
        return static_cast<std::uint64_t>(m >> 64);
    }

private:
    std::uint64_t state_;
};

// Stated per-sample seed derivation: mix the master seed once through
// SplitMix64's finalizer, xor with the index scaled by the golden-ratio
// increment, and finalize again. Order-free, so parallel workers agree.
inline std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) {
    auto mix = [](std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    };
    return mix(mix(master_seed + 0x9E3779B97F4A7C15ull) ^
               (index * 0xD1342543DE82EF95ull + 0x2545F4914F6CDD1Dull));
}

}  // namespace markerforge
