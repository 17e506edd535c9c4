#pragma once

// Counter-based Gaussian streams: Philox4x32-10 keyed per path, so every path's
// draws are a pure function of (master seed, path index, draw index).

#include "bidask/normal.hpp"

#include <array>
#include <cstdint>

namespace bidask::rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Per-path key derived from the master seed and path index.
inline constexpr std::uint64_t path_seed(std::uint64_t master_seed, std::uint64_t path) {
    return splitmix64(master_seed ^ splitmix64(path ^ 0xA0761D6478BD642FULL));
}

using Philox4x32 = std::array<std::uint32_t, 4>;

inline Philox4x32 philox4x32_10(Philox4x32 ctr, std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
    for (int r = 0; r < 10; ++r) {
        const std::uint64_t p0 = std::uint64_t{m0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{m1} * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += w0;
        key[1] += w1;
    }
    return ctr;
}

/// Uniform in the open interval (0,1) from the top 53 bits of a 64-bit word.
inline double to_open_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal stream for one path (inverse CDF of 64-bit uniforms).
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}
    GaussianStream(std::uint64_t master_seed, std::uint64_t path)
        : GaussianStream(path_seed(master_seed, path)) {}

    std::uint64_t next_bits() {
        if (avail_ == 0) refill();
        return buf_[--avail_];
    }
    double next_uniform() { return to_open_unit(next_bits()); }
    double next() { return normal::quantile_fast(next_uniform()); }

private:
    void refill() {
        const Philox4x32 out = philox4x32_10(
            {static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32), 0u, 0u},
            key_);
        ++block_;
        // consumed back to front
        buf_[1] = (std::uint64_t{out[1]} << 32) | out[0];
        buf_[0] = (std::uint64_t{out[3]} << 32) | out[2];
        avail_ = 2;
    }

    std::array<std::uint32_t, 2> key_;
    std::uint64_t block_ = 0;
    std::array<std::uint64_t, 2> buf_{};
    int avail_ = 0;
};

} // namespace bidask::rng
