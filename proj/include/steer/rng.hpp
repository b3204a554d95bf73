#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace steer {

// Counter-based deterministic generator. Every draw is a pure function of
// (key, counter), so streams keyed by (seed, sim_id, lineage_id) reproduce
// identically regardless of scheduling order.
inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    return mix64(a ^ (mix64(b) + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

inline uint64_t derive_key(uint64_t seed, std::string_view label,
                           uint64_t a = 0, uint64_t b = 0) {
    uint64_t k = seed;
    for (char c : label) k = hash_combine(k, static_cast<uint64_t>(static_cast<unsigned char>(c)));
    k = hash_combine(k, a);
    k = hash_combine(k, b);
    return k;
}

class CounterRng {
public:
    CounterRng() = default;
    explicit CounterRng(uint64_t key) : key_(key) {}

    uint64_t next_u64() { return mix64(key_ ^ mix64(++counter_)); }

    // uniform in (0, 1]
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    // standard normal via Box-Muller; consumes two counter steps per draw
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    uint64_t key() const { return key_; }
    uint64_t counter() const { return counter_; }

private:
    uint64_t key_ = 0;
    uint64_t counter_ = 0;
};

}  // namespace steer
