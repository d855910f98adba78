#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace geos {

// Every random draw in the project flows from one root seed through named
// substream derivation, so reruns are bit-identical and independent of the
// order in which substreams are consumed.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t root, std::string_view name) {
    uint64_t h = 1469598103934665603ULL;  // FNV-1a offset basis
    for (unsigned char c : name) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return splitmix64(root ^ splitmix64(h));
}

inline uint64_t derive_seed(uint64_t root, std::string_view name, uint64_t index) {
    return splitmix64(derive_seed(root, name) + 0x9e3779b97f4a7c15ULL * (index + 1));
}

// mt19937_64 is fully specified by the standard; the helpers below avoid
// std::*_distribution, whose output is implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Unbiased integer in [0, n).
    size_t index(size_t n) {
        uint64_t bound = static_cast<uint64_t>(n);
        uint64_t threshold = (-bound) % bound;
        for (;;) {
            uint64_t x = gen_();
            if (x >= threshold) return static_cast<size_t>(x % bound);
        }
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; pair cached for determinism-friendly single-call use.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace geos
