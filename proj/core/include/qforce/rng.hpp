// Reproducible per-trajectory random streams
#pragma once

#include <cstdint>
#include <random>

namespace qforce {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/**
 * @brief Normal variates for trajectory `stream` of a run seeded with `seed`.
 *
 * The stream depends only on (seed, stream), never on scheduling order.
 */
class SubstreamRng {
  public:
    SubstreamRng(std::uint64_t seed, std::uint64_t stream)
        : engine_(mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL))) {}

    double normal() { return normal_(engine_); }
    std::mt19937_64 &engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace qforce
