#pragma once

// Counter-based seed derivation plus a small, portable generator.
// Every parallel unit of work (disorder draw, chain, bootstrap, ...) gets its
// own stream derived from (master seed, purpose, indices), never a shared one,
// so results are independent of thread scheduling.

#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "gibbslab/common.hpp"

namespace gibbslab {

inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Fold one word into a derivation key (hash-combine followed by a full mix).
inline uint64_t fold_seed(uint64_t key, uint64_t word) {
    key ^= word + 0x9e3779b97f4a7c15ULL + (key << 6) + (key >> 2);
    return mix64(key);
}

inline uint64_t derive_seed(uint64_t master, std::initializer_list<uint64_t> path) {
    uint64_t k = mix64(master);
    for (uint64_t w : path) k = fold_seed(k, w);
    return k;
}

// Stream purposes; part of the seed path so distinct uses never collide.
namespace purpose {
constexpr uint64_t disorder     = 0xD150;
constexpr uint64_t perturbation = 0xBE27;
constexpr uint64_t lambda       = 0x1A3B;
constexpr uint64_t chain        = 0xC4A1;
constexpr uint64_t chain_init   = 0x1171;
constexpr uint64_t bootstrap    = 0xB007;
constexpr uint64_t gate         = 0x6A7E;
constexpr uint64_t estimator    = 0xE571;
constexpr uint64_t usite        = 0x0517;
} // namespace purpose

// xoshiro256++ seeded through splitmix64.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) {
        uint64_t sm = seed;
        for (auto& w : s_) {
            sm += 0x9e3779b97f4a7c15ULL;
            w = mix64(sm);
        }
        have_cached_normal_ = false;
    }

    static Rng from_path(uint64_t master, std::initializer_list<uint64_t> path) {
        return Rng(derive_seed(master, path));
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0,1)
    double u01() { return (next_u64() >> 11) * 0x1.0p-53; }

    // uniform in (0,1], safe as a log() argument
    double u01_pos() { return ((next_u64() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * u01(); }

    // unbiased integer in [0, n)
    uint64_t uniform_int(uint64_t n) {
        check_arg(n > 0, "uniform_int: n must be positive");
        const uint64_t bound = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do { x = next_u64(); } while (x >= bound);
        return x % n;
    }

    double normal() {
        if (have_cached_normal_) {
            have_cached_normal_ = false;
            return cached_normal_;
        }
        const double u = u01_pos();
        const double v = u01();
        const double r = std::sqrt(-2.0 * std::log(u));
        const double a = 6.283185307179586476925286766559 * v;
        cached_normal_ = r * std::sin(a);
        have_cached_normal_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Exact Poisson sampling by inversion; large means are split into
    // chunks <= 16 and summed (Poisson additivity), keeping the inversion
    // loop short without resorting to approximations.
    long poisson(double mean) {
        check_arg(mean >= 0, "poisson: mean must be non-negative");
        long total = 0;
        while (mean > 16.0) {
            total += poisson_inversion(16.0);
            mean -= 16.0;
        }
        if (mean > 0) total += poisson_inversion(mean);
        return total;
    }

    double exponential() { return -std::log(u01_pos()); }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    long poisson_inversion(double lambda) {
        const double u = u01();
        double p = std::exp(-lambda);
        double cum = p;
        long k = 0;
        const long cap = static_cast<long>(lambda + 40.0 * std::sqrt(lambda) + 64.0);
        while (u > cum && k < cap) {
            ++k;
            p *= lambda / static_cast<double>(k);
            cum += p;
        }
        return k;
    }

    uint64_t s_[4];
    bool have_cached_normal_;
    double cached_normal_;
};

} // namespace gibbslab
