#pragma once

// Portable sampling helpers. The standard distributions are implementation
// defined, so anything that must reproduce bit-for-bit across toolchains goes
// through these instead.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace prefx {

using Rng = std::mt19937_64;

/// Uniform integer in [0, n). n must be > 0.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// Uniform double in [0, 1) with 53 random bits.
double uniform_unit(Rng& rng);

/// Standard normal via Box-Muller; consumes two draws per call.
double standard_normal(Rng& rng);

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

/// k distinct indices from [0, n), in sampling order.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

/// Index drawn proportionally to non-negative weights; at least one must be > 0.
std::size_t weighted_index(Rng& rng, std::span<const double> weights);

/// Derive an independent stream seed from a base seed and a salt.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace prefx
