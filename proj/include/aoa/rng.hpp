#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace aoa {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed for the stream identified by `path` under `master`. Distinct paths give
/// statistically independent streams, so work items can be seeded without
/// depending on the order in which they run.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path)
{
    std::uint64_t s = mix64(master);
    for (auto p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
    return s;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> path = {})
{
    return Rng(derive_seed(master, path));
}

/// Stream tags keep derived seeds of different subsystems apart.
enum class Stream : std::uint64_t {
    Field = 1,
    Sampling = 2,
    Folds = 3,
    Forest = 4,
    Importance = 5,
    Tree = 6,
    Response = 7,
    Scenario = 8,
};

constexpr std::uint64_t tag(Stream s) { return static_cast<std::uint64_t>(s); }

}  // namespace aoa
