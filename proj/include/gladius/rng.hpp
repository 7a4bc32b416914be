#pragma once

#include <cstdint>
#include <random>

namespace gladius {

/// Name recorded in dataset metadata so files state how they were drawn.
inline constexpr const char* kRngName = "mt19937_64+splitmix64-stream";

/// SplitMix64 finalizer (Steele, Lea & Flood 2014).
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed for sub-stream `stream` of `master`: splitmix64(master + (stream + 1) * golden).
/// Trajectory j always uses stream j, so output does not depend on generation order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
    return splitmix64(master + (stream + 1) * 0x9E3779B97F4A7C15ULL);
}

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t master, std::uint64_t stream) {
    return Engine(derive_seed(master, stream));
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Engine& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [lo, hi]. Modulo bias is below 2^-58 for the small ranges used here.
inline long uniform_int(Engine& gen, long lo, long hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<long>(gen() % span);
}

}  // namespace gladius
