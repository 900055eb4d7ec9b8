#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace trialsupply {

using Seed = std::uint64_t;
using Engine = std::mt19937_64;

/// SplitMix64 finalizer; used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t hash_name(std::string_view name) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Named, indexed sub-stream of a parent seed. Streams with different
/// (name, index) pairs are independent for all practical purposes.
constexpr Seed derive_seed(Seed parent, std::string_view name, std::uint64_t index = 0) {
    return mix64(mix64(parent ^ hash_name(name)) + mix64(index + 0x632be59bd9b4e019ULL));
}

constexpr Seed derive_seed(Seed parent, std::string_view name, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(parent, name, a), "sub", b);
}

inline Engine make_engine(Seed seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    return Engine(seq);
}

/// Uniform double on [0, 1) from 53 random bits; identical across standard libraries.
inline double uniform01(Engine& eng) { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

inline double uniform(Engine& eng, double lo, double hi) { return lo + (hi - lo) * uniform01(eng); }

}  // namespace trialsupply
