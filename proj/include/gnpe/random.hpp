#pragma once

#include <cstdint>
#include <random>

namespace gnpe {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream). Streams are used for per-chain,
/// per-example and per-repetition randomness so results do not depend on how
/// work is scheduled.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x9e3779b9u};
    return Rng(seq);
}

/// Derives a child seed; used to give sub-tasks their own seed namespace.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline double standard_normal(Rng& rng) {
    return std::normal_distribution<double>{0.0, 1.0}(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>{lo, hi}(rng);
}

}  // namespace gnpe
