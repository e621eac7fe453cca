#pragma once
#include <array>
#include <cstdint>

namespace twocabin {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace detail

/// Reproducible random stream keyed by (seed, stream_id).  Identical keys
/// reproduce identical draw sequences; distinct stream_ids give streams that
/// are independent for practical purposes.  Instances are cheap to create;
/// derive per-task streams with child() instead of sharing one stream across
/// concurrent work.
class RandomStream {
  public:
    RandomStream(std::uint64_t seed, std::uint64_t stream_id)
        : seed_(seed), stream_id_(stream_id) {
        // xoshiro256** state seeded through splitmix64, as recommended.
        std::uint64_t sm = seed ^ (0x6a09e667f3bcc909ull + stream_id * 0x9e3779b97f4a7c15ull);
        for (auto& w : s_) w = detail::splitmix64(sm);
        bool all_zero = true;
        for (auto w : s_) all_zero &= (w == 0);
        if (all_zero) s_[0] = 0x1ull;
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    /// Fresh stream derived from this stream's identity; advancing the parent
    /// does not affect children.
    RandomStream child(std::uint64_t i) const {
        std::uint64_t sm = stream_id_ * 0x9e3779b97f4a7c15ull + 0x100000001b3ull;
        sm ^= detail::splitmix64(sm) + i;
        std::uint64_t mixed = detail::splitmix64(sm);
        return RandomStream(seed_, mixed ^ (i + 1));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform draw in the open interval (0,1); never returns an endpoint,
    /// so inverse-CDF transforms stay finite.
    double uniform01() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Uniform draw on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in {0, ..., n-1} (n >= 1), by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t lim = ~std::uint64_t(0) - (~std::uint64_t(0) % n);
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= lim);
        return x % n;
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::array<std::uint64_t, 4> s_{};
};

}  // namespace twocabin
