#pragma once

#include <cstdint>

namespace mptc {

/// SplitMix64: a 64-bit counter-based generator. The state advances by a
/// fixed odd increment and each output is a bijective mix of the counter,
/// so streams are identical on every platform and easy to reproduce in other
/// languages.
class SplitMix64 {
 public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Unbiased integer in [0, bound) by rejection of the low remainder band.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t x = next();
            if (x >= threshold) return x % bound;
        }
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (cosine branch only, one draw per call).
    double gaussian();

 private:
    std::uint64_t state_;
};

}  // namespace mptc
