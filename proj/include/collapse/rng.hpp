#pragma once
// Seeded random streams with a portable layer on top of std::mt19937_64.
// All distribution transforms live here so that a (seed, call sequence)
// pair produces the same values on every build.

#include <cmath>
#include <cstdint>
#include <random>

namespace collapse {

// SplitMix64 finalizer, used to derive independent stream seeds from a
// (master seed, run index) pair without correlations between streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_stream_seed(std::uint64_t master_seed, std::uint64_t run_index) {
    return splitmix64(splitmix64(master_seed) ^ splitmix64(run_index + 0x51ed2701ULL));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform double in [0, 1), 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform double in (0, 1], safe as a log() argument.
    double uniform_positive() {
        return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    }

    // Uniform integer in [0, bound). bound must be >= 1.
    std::uint64_t uniform_below(std::uint64_t bound) {
        // multiply-shift; bias is < 2^-64 per draw, irrelevant at our scales
        unsigned __int128 wide = static_cast<unsigned __int128>(engine_()) * bound;
        return static_cast<std::uint64_t>(wide >> 64);
    }

    // Standard normal via Box-Muller; the paired value is cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = uniform_positive();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        cached_ = radius * std::sin(angle);
        has_cached_ = true;
        return radius * std::cos(angle);
    }

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace collapse
