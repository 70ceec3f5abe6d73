#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace dacesr {

// xoshiro256++ seeded through splitmix64. All project randomness goes
// through this generator so runs are bit-reproducible across platforms;
// std::normal_distribution is implementation-defined and never used.
class Rng {
public:
    explicit Rng(uint64_t seed) : root_(seed) {
        uint64_t s = seed;
        for (auto& si : state_) si = splitmix(s);
        has_spare_ = false;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0,1).
    double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Uniform integer in [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    /// Standard normal via Box-Muller (cached spare).
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = next_double();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double th = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(th);
        has_spare_ = true;
        return r * std::cos(th);
    }

    uint64_t root_seed() const { return root_; }

    /// Independent sub-stream derived from this generator's root seed.
    Rng fork(uint64_t stream) const {
        return Rng(mix(root_, stream));
    }
    Rng fork(std::string_view name) const { return fork(fnv1a(name)); }

    static uint64_t mix(uint64_t seed, uint64_t stream) {
        uint64_t s = seed ^ (0x9E3779B97F4A7C15ULL * (stream + 1));
        return splitmix(s);
    }

    static uint64_t fnv1a(std::string_view s) {
        uint64_t h = 1469598103934665603ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        return h;
    }

private:
    static uint64_t splitmix(uint64_t& x) {
        x += 0x9E3779B97F4A7C15ULL;
        uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t root_;
    uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace dacesr
