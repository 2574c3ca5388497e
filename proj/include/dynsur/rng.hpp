#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace dynsur {

using Rng = std::mt19937_64;

/// Child seed for a named sub-stream of `parent`.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream);

/// Child seed for the `index`-th member of a family (e.g. realization i of a pool).
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index);

/// Unbiased integer in [0, n) from raw 64-bit draws (rejection sampling).
std::size_t uniform_index(Rng& rng, std::size_t n);

}  // namespace dynsur
