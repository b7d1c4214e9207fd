#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace af {

// Deterministic PRNG used everywhere instead of <random> distributions,
// whose outputs are implementation-defined. xoshiro256++ core, Box-Muller
// normals. Same seed gives bit-identical streams on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed) {
        uint64_t x = seed;
        for (auto& si : s_) si = splitmix64(x);
        cached_ = false;
        cache_ = 0.0;
    }

    uint64_t seed() const { return seed_; }

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

    // [0,1)
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0,n), unbiased enough for our purposes (Lemire reduction)
    int uniform_int(int n) {
        return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                                 static_cast<unsigned __int128>(n)) >> 64);
    }

    double normal() {
        if (cached_) {
            cached_ = false;
            return cache_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cache_ = r * std::sin(a);
        cached_ = true;
        return r * std::cos(a);
    }

    float normalf() { return static_cast<float>(normal()); }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            int j = uniform_int(i + 1);
            std::swap(v[i], v[j]);
        }
    }

    // Independent child stream; derived from the root seed, not the current
    // state, so stream layout does not depend on consumption order.
    Rng fork(uint64_t tag) const {
        uint64_t x = seed_ ^ (0x9e3779b97f4a7c15ull + tag * 0xbf58476d1ce4e5b9ull);
        return Rng(splitmix64(x));
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static uint64_t splitmix64(uint64_t& x) {
        x += 0x9e3779b97f4a7c15ull;
        uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    uint64_t seed_;
    uint64_t s_[4];
    bool cached_;
    double cache_;
};

}  // namespace af
