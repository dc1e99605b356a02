#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace eat {

// splitmix64 finalizer; the whole generator is built from it.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_name(const std::string &s) {
    uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Counter-based generator keyed by up to four stream words. A draw is a pure
// function of (key, counter), so results do not depend on thread scheduling
// or on how many other streams were consumed.
class CounterRng {
public:
    explicit CounterRng(uint64_t seed, uint64_t s0 = 0, uint64_t s1 = 0, uint64_t s2 = 0) {
        key_ = mix64(seed);
        key_ = mix64(key_ ^ mix64(s0 ^ 0x6a09e667f3bcc908ULL));
        key_ = mix64(key_ ^ mix64(s1 ^ 0xbb67ae8584caa73bULL));
        key_ = mix64(key_ ^ mix64(s2 ^ 0x3c6ef372fe94f82bULL));
    }

    uint64_t next_u64() { return mix64(key_ + 0x9e3779b97f4a7c15ULL * (++counter_)); }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    int next_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Normal(0, std) rejected outside +-2 std, the usual ViT init.
    double truncated_normal(double std_dev) {
        for (;;) {
            double g = next_gaussian();
            if (std::fabs(g) <= 2.0) return g * std_dev;
        }
    }

    // Beta(a, a) via Johnk's algorithm; a = 0 returns 1 (mixup disabled).
    double next_beta(double a) {
        if (a <= 0.0) return 1.0;
        for (;;) {
            double u = next_double();
            double v = next_double();
            if (u <= 0.0 || v <= 0.0) continue;
            double x = std::pow(u, 1.0 / a);
            double y = std::pow(v, 1.0 / a);
            if (x + y <= 1.0 && x + y > 0.0) return x / (x + y);
        }
    }

    uint64_t counter() const { return counter_; }

private:
    uint64_t key_ = 0;
    uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace eat
