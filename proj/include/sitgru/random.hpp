// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "sitgru/tensor.hpp"

namespace sitgru {

using Rng = std::mt19937_64;

/// Child seed for a named random stream. Each component asks for its own
/// stream by name, so adding a new consumer leaves existing streams untouched.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : stream) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::uint64_t z = master ^ h;
    // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t index) {
    return derive_seed(derive_seed(master, stream), std::to_string(index));
}

// Uniform double in [lo, hi). Built from raw bits so the sequence is the same
// on every standard library.
inline double uniform(Rng& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

inline Tensor random_uniform(Shape shape, double lo, double hi, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = uniform(rng, lo, hi);
    return t;
}

/// Glorot-uniform matrix: bound sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(std::size_t fan_out, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return random_uniform({fan_out, fan_in}, -bound, bound, rng);
}

// Fisher-Yates driven by the raw generator (std::shuffle is library-specific).
template <typename T>
void deterministic_shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace sitgru
