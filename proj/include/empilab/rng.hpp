#pragma once

#include <cstdint>
#include <random>

namespace empilab {

/// SplitMix64 finalizer. Used to spread raw seeds and to derive sub-stream
/// seeds; the constants are the standard ones from Steele et al.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seed for sub-stream `index` of a base seed. One sub-stream per trajectory
/// (or trial) index, so serial and fanned-out runs draw identical samples.
inline std::uint64_t substream_seed(std::uint64_t base_seed, std::uint64_t index) {
    return mix64(base_seed + 0x9e3779b97f4a7c15ULL * (index + 1));
}

/// Seedable generator with platform-stable output. The engine is the
/// standard mt19937_64 (its raw stream is specified exactly); the value
/// mappings below avoid std::*_distribution, whose output is
/// implementation-defined and would break bit-reproducibility across
/// standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in {0, ..., n-1}.
    int uniform_int(int n) {
        return static_cast<int>(static_cast<std::uint64_t>(uniform() * n)) % n;
    }

    /// Draw an index from an unnormalized nonnegative weight row by CDF
    /// inversion. Never returns an index with zero weight: rounding slack
    /// at the top of the CDF falls into the last positive-weight bucket.
    template <typename Row>
    int categorical(const Row& weights, int n) {
        const double u = uniform() * row_sum(weights, n);
        double acc = 0.0;
        int last_positive = -1;
        for (int i = 0; i < n; ++i) {
            const double w = weights[i];
            if (w <= 0.0) continue;
            last_positive = i;
            acc += w;
            if (u < acc) return i;
        }
        return last_positive;
    }

  private:
    template <typename Row>
    static double row_sum(const Row& weights, int n) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += weights[i] > 0.0 ? weights[i] : 0.0;
        return s;
    }

    std::mt19937_64 engine_;
};

}  // namespace empilab
