#pragma once

#include <cstdint>
#include <random>

namespace hbm {

using Rng = std::mt19937_64;

/// Child seed keyed by (root, index). Pure function of its arguments.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

/// Independent, reproducible random stream for `index` under `root`.
Rng split_stream(std::uint64_t root, std::uint64_t index);

}  // namespace hbm
