#pragma once

#include <cstdint>
#include <random>

namespace etd {

/// splitmix64 finalizer; decorrelates nearby integer seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent sub-seed from a master seed and a stream tag.
/// Used to hand out per-fold / per-tree / per-epoch seeds so parallel
/// work stays deterministic regardless of scheduling.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
    return splitmix64(master ^ splitmix64(tag));
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag1, std::uint64_t tag2) {
    return derive_seed(derive_seed(master, tag1), tag2);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

} // namespace etd
