#pragma once

#include <cstdint>

namespace cmpstomo {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for an independent generator identified by (seed, item, stream).
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t item, std::uint64_t stream = 0) {
    return splitmix64(splitmix64(splitmix64(seed) ^ item) ^ stream);
}

}  // namespace cmpstomo
