#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fewclusters {

/// Engine used throughout. mt19937_64 output is fixed by the standard; all
/// distributions below are library-independent so streams are portable.
using Engine = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from a base seed and a path of
/// integer coordinates, e.g. (replication, cluster, column).
constexpr std::uint64_t derive_seed(std::uint64_t base,
                                    std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = mix64(base);
    for (auto p : path) h = mix64(h ^ mix64(p + 0x632BE59BD9B4E019ull));
    return h;
}

// Stream tags, so that different consumers of one replication seed never
// share a stream.
namespace stream {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kPairing = 2;
inline constexpr std::uint64_t kBootstrap = 3;
inline constexpr std::uint64_t kRandomizedTest = 4;
inline constexpr std::uint64_t kSubsample = 5;
inline constexpr std::uint64_t kCustom = 6;
}  // namespace stream

Engine make_engine(std::uint64_t seed);

/// Uniform on [0, 1) with 53 random bits.
double uniform01(Engine& eng);
/// Uniform integer on [lo, hi], inclusive; unbiased by rejection.
std::uint64_t uniform_int(Engine& eng, std::uint64_t lo, std::uint64_t hi);
/// Standard normal draw (Boost ziggurat).
double std_normal(Engine& eng);

}  // namespace fewclusters
