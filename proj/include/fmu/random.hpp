#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace fmu {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent generator keyed by (seed, stream, index). Used to give every
/// (generation, sample) pair its own stream so that results do not depend on
/// evaluation order.
inline Rng substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    return Rng(splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index));
}

inline double uniform01(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double standard_normal(Rng& rng) {
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline Eigen::VectorXd standard_normal(Rng& rng, Eigen::Index n) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(rng);
    return z;
}

}  // namespace fmu
