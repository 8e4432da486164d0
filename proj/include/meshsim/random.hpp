#pragma once

#include <cstdint>
#include <random>

namespace meshsim {

/// Engine used for every stochastic routine: 64-bit Mersenne Twister
/// (MT19937-64), reproducible for a fixed seed.
using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Used to derive statistically independent child
/// seeds from a parent seed and a stream index.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Child seed for stream `index` of `seed`. Distinct indices give
/// independent streams; the mapping is a pure function.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t seed) {
    return Rng(splitmix64(seed));
}

}  // namespace meshsim
