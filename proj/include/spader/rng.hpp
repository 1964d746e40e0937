#pragma once

#include <cstdint>
#include <random>

namespace spader {

using Rng = std::mt19937_64;

/// Independent stream for (seed, id). `salt` separates unrelated consumers
/// that share the same id space (dataset generation vs scoring, for example).
inline Rng make_stream(std::uint64_t seed, std::uint64_t id, std::uint64_t salt = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32),
                      static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
    return Rng(seq);
}

inline double standard_normal(Rng& rng) {
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace spader
