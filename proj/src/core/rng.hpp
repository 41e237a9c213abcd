#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace m2d2 {

// Deterministic RNG used everywhere in the library. Distribution sampling is
// implemented by hand (not via std:: distributions, whose output is
// implementation-defined) so that a seed fully determines every artifact the
// library writes.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(mix(seed)) {}

    // Independent stream derived from (seed, stream) by fixed mixing.
    Rng(std::uint64_t seed, std::uint64_t stream)
        : eng_(mix(mix(seed) + 0x9e3779b97f4a7c15ULL * (stream + 1))) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() {
        return static_cast<double>(eng_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the second variate of each pair is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    // Uniform integer in [0, n), unbiased via rejection.
    std::size_t index(std::size_t n) {
        if (n <= 1) return 0;
        std::uint64_t range = static_cast<std::uint64_t>(n);
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        std::uint64_t x = 0;
        do {
            x = eng_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % range);
    }

private:
    static std::uint64_t mix(std::uint64_t x) {
        // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace m2d2
