// Deterministic random number generation.
//
// Every stochastic component in the library (noise injection, random attacks,
// k-means seeding) draws from this generator so that runs are reproducible
// bit-for-bit across platforms. std::mt19937 with std::*_distribution is
// avoided on purpose: the distributions are implementation-defined and break
// cross-platform reproducibility.

#ifndef KOOPDET_RNG_HPP
#define KOOPDET_RNG_HPP

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

namespace koopdet {

// SplitMix64 (Steele, Lea, Flood 2014). Passes BigCrush, trivially seedable,
// and cheap to split into independent substreams.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Child stream seeded from this one; advances this stream by one draw.
    SplitMix64 split() { return SplitMix64(next()); }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection sampling, no modulo bias.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller. One value per call; the sine branch is
    // discarded to keep the draw count predictable.
    double normal() {
        // u1 in (0, 1] so the log is finite.
        const double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    Eigen::VectorXd normal_vector(Eigen::Index n) {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

private:
    std::uint64_t state_;
};

}  // namespace koopdet

#endif  // KOOPDET_RNG_HPP
