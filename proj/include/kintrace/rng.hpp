#pragma once

#include <cstdint>
#include <cmath>

#include "kintrace/vec.hpp"

namespace kintrace {

// Counter-based RNG (Philox-4x32-10). A draw is a pure function of
// (seed, stream, counter), so results do not depend on execution order or
// thread count: every trajectory / scan point derives its own stream id.

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline void philox_round(std::uint32_t c[4], const std::uint32_t k[2]) {
    constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * c[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * c[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    const std::uint32_t out[4] = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    c[0] = out[0]; c[1] = out[1]; c[2] = out[2]; c[3] = out[3];
}

}  // namespace detail

class CounterRng {
  public:
    // Combine an arbitrary list of ids into one stream id.
    static std::uint64_t stream_id(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
        std::uint64_t h = detail::splitmix64(a ^ 0x6A09E667F3BCC909ULL);
        h = detail::splitmix64(h ^ b);
        h = detail::splitmix64(h ^ c);
        return h;
    }

    CounterRng(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {}

    // Independent child stream, itself counter-based.
    CounterRng substream(std::uint64_t id) const {
        return CounterRng(seed_, stream_id(stream_, id, 0x517CC1B727220A95ULL));
    }

    std::uint32_t next_u32() {
        if (block_pos_ >= 4) refill();
        return block_[block_pos_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Uniform on [0,1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0,1]; safe under log().
    double uniform01_open_below() { return 1.0 - uniform01(); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal (Box-Muller, pair cached).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform01_open_below();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    template <std::size_t N>
    Vec<N> normal_vec() {
        Vec<N> v;
        for (std::size_t i = 0; i < N; ++i) v[i] = normal();
        return v;
    }

    // Uniform direction on the unit sphere S^{N-1}.
    template <std::size_t N>
    Vec<N> unit_vec() {
        while (true) {
            Vec<N> v = normal_vec<N>();
            const double n = norm(v);
            if (n > 1e-12) return v / n;
        }
    }

    // Uniform in the ball of given radius.
    template <std::size_t N>
    Vec<N> ball(double radius) {
        const double u = uniform01();
        return (radius * std::pow(u, 1.0 / static_cast<double>(N))) * unit_vec<N>();
    }

  private:
    void refill() {
        std::uint32_t c[4] = {
            static_cast<std::uint32_t>(ctr_), static_cast<std::uint32_t>(ctr_ >> 32),
            static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
        std::uint32_t k[2] = {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
        constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;
        for (int r = 0; r < 10; ++r) {
            detail::philox_round(c, k);
            k[0] += W0;
            k[1] += W1;
        }
        block_[0] = c[0]; block_[1] = c[1]; block_[2] = c[2]; block_[3] = c[3];
        block_pos_ = 0;
        ++ctr_;
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t ctr_ = 0;
    std::uint32_t block_[4] = {};
    int block_pos_ = 4;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace kintrace
