#ifndef FEDPM_RNG_HPP
#define FEDPM_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace fedpm {

/// splitmix64 finalizer; used to fold stream identifiers into a master seed.
inline std::uint64_t mix_seed(std::uint64_t state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/**
 * Deterministic random stream. All distributions are sampled from raw
 * mt19937_64 bits by hand so that sequences are identical across standard
 * library implementations (std::uniform_real_distribution et al. are
 * implementation-defined).
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Derive an independent substream from a master seed and an id path,
    /// e.g. {domain, round, purpose}.
    static Rng derive(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
        std::uint64_t s = master;
        for (std::uint64_t p : path) s = mix_seed(s ^ p);
        return Rng(mix_seed(s));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    /// Standard normal via Box-Muller (one value per call).
    double normal() {
        const double u1 = 1.0 - uniform01();  // (0, 1]
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Exponential with the given scale (mean = scale).
    double exponential(double scale) {
        return -scale * std::log(1.0 - uniform01());
    }

    double laplace(double mean, double scale) {
        const double u = uniform01() - 0.5;
        const double sign = u < 0.0 ? -1.0 : 1.0;
        const double tail = std::max(1.0 - 2.0 * std::fabs(u), 0x1.0p-53);
        return mean - scale * sign * std::log(tail);
    }

    /// Uniform integer in [0, n), modulo method (bias negligible at these n).
    std::uint64_t below(std::uint64_t n) { return engine_() % n; }

    /// Fisher-Yates; std::shuffle sequences are implementation-defined.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace fedpm

#endif  // FEDPM_RNG_HPP
