#pragma once

#include <cstdint>
#include <string_view>

namespace gladcf {

/// splitmix64 finaliser; bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Derives an independent stream seed from a master seed, a purpose tag and an index.
/// Used so that fold i's splitter/augmenter/detector seeds do not depend on other folds.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                    std::uint64_t index = 0) noexcept {
    return mix64(mix64(master ^ fnv1a64(tag)) + index);
}

}  // namespace gladcf

#include <random>

namespace gladcf {

/// Uniform double in [0, 1) built from the top 53 bits of one mt19937_64 draw.
inline double uniform01(std::mt19937_64& rng) noexcept {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform01(rng);
}

}  // namespace gladcf
