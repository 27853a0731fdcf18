#pragma once

#include <cstdint>
#include <random>

#include "streamst/types.hpp"

namespace streamst {

using Rng = std::mt19937_64;

/// Independent streams derived from one root seed.
enum class Stream : std::uint64_t { Network = 1, Simulation = 2, Chain = 3, Prediction = 4, Masking = 5 };

inline Rng make_rng(std::uint64_t root_seed, Stream purpose, std::uint64_t index = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(root_seed), static_cast<std::uint32_t>(root_seed >> 32),
                      static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    return Rng(seq);
}

inline Vector standard_normal(Rng& rng, Eigen::Index n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector z(n);
    for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(rng);
    return z;
}

}  // namespace streamst
