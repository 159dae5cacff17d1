#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace spm {

/// SplitMix64 step; used as the stream-derivation mixer.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// FNV-1a hash of a stage name, used as a stream tag.
inline std::uint64_t stream_tag(std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Derives the 64-bit seed of stream (tag, index) from a master seed.
///
/// Rule (pinned for reproducibility): three chained SplitMix64 steps over
/// master, then master^tag, then that^index. Every random stream in the
/// toolkit is an std::mt19937_64 seeded with this value.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag, std::uint64_t index) {
    std::uint64_t s = master;
    std::uint64_t a = splitmix64(s);
    s = a ^ tag;
    std::uint64_t b = splitmix64(s);
    s = b ^ index;
    return splitmix64(s);
}

inline std::mt19937_64 derive_stream(std::uint64_t master, std::string_view stage, std::uint64_t index = 0) {
    return std::mt19937_64(derive_seed(master, stream_tag(stage), index));
}

/// Uniform double in [0, 1), 53-bit resolution.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform double in (0, 1]; safe as an argument to log().
inline double uniform01_open(std::mt19937_64& rng) {
    return 1.0 - uniform01(rng);
}

/// Uniform double in [lo, hi].
inline double uniform_range(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [0, n).
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    // Rejection sampling keeps the distribution exact.
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

} // namespace spm
