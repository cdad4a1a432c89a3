#pragma once

#include <random>
#include <vector>

#include "spillover/synthlab.hpp"
#include "spillover/transfer_entropy.hpp"

namespace fixture {

inline std::vector<double> normals(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    std::vector<double> v(n);
    for (auto& x : v) x = z(rng);
    return v;
}

/// NA drives EU at lag one; AS is independent. Source of the golden table.
inline std::vector<spillover::ChangeSeries> three_regions() {
    const auto pair = spillover::synth::generate_coupled_pair(0.6, 1.0, 600, 2024);
    spillover::ChangeSeries na = pair.y, eu = pair.x, as;
    na.label = "NA";
    eu.label = "EU";
    as.label = "AS";
    as.values = normals(600, 99);
    return {na, eu, as};
}

inline spillover::TeConfig golden_config() {
    spillover::TeConfig cfg;
    cfg.n_perm = 999;
    cfg.seed = 7;
    return cfg;
}

}  // namespace fixture
