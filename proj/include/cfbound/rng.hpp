#pragma once

#include <cstdint>
#include <random>

namespace cfbound {

/// SplitMix64 finalizer; the fixed 64-bit mixing function behind all seed
/// derivation in this project.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Child seed for sub-task `index` of a run seeded with `parent`. Parallel
/// and sequential execution agree because the child stream depends only on
/// (parent, index).
inline std::uint64_t mix_seed(std::uint64_t parent, std::uint64_t index) {
    return splitmix64(parent ^ splitmix64(index + 0x9E3779B97F4A7C15ULL));
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

}  // namespace cfbound
