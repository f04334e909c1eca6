#pragma once

#include <cstdint>
#include <random>

namespace stratboost {

/// SplitMix64 mixing step. Used to derive well-separated stream seeds from a
/// single master seed so that per-stratum / per-task generation stays
/// reproducible regardless of execution order.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(master ^ splitmix64(stream + 1));
}

inline std::mt19937_64 make_engine(std::uint64_t master, std::uint64_t stream) {
    return std::mt19937_64(derive_seed(master, stream));
}

}  // namespace stratboost
