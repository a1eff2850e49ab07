// rng.hpp — counter-based deterministic random streams.
//
// All randomness in a run flows from one 64-bit seed through named
// sub-streams keyed by (seed, stream, c0, c1). Draw k of stream S at
// counter (i, j) never depends on what other streams consumed, so
// components stay reproducible independently and runs are resumable
// without serializing generator state.
//
// Distributions are implemented here rather than via <random> because
// std::normal_distribution is implementation-defined and would break
// bitwise reproducibility across standard libraries.
#pragma once

#include <cmath>
#include <cstdint>

namespace trw {

enum class Stream : std::uint64_t {
    kOriginalData = 1,
    kTestData = 2,
    kAugment = 3,
    kPerturb = 4,
    kInit = 5,
    kBatchOriginal = 6,
    kBatchGenerated = 7,
    kBatchMeta = 8,
    kTriplet = 9,
    kMonteCarlo = 10,
    kScratch = 11,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class StreamRng {
public:
    StreamRng(std::uint64_t seed, Stream stream, std::uint64_t c0 = 0, std::uint64_t c1 = 0) {
        state_ = splitmix64(seed ^ 0xa076'1d64'78bd'642fULL);
        state_ = splitmix64(state_ ^ static_cast<std::uint64_t>(stream));
        state_ = splitmix64(state_ ^ c0);
        state_ = splitmix64(state_ ^ c1);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    // uniform in [0, 1), 53-bit resolution
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [-1, 1)
    double next_symmetric() { return 2.0 * next_unit() - 1.0; }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // unbiased integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) {
        std::uint64_t threshold = (0ULL - n) % n;  // 2^64 mod n
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // standard normal, polar Box-Muller (log/sqrt only; no trig)
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = next_symmetric();
            v = next_symmetric();
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double scale = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * scale;
        have_spare_ = true;
        return u * scale;
    }

private:
    std::uint64_t state_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace trw
