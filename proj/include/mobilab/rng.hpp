#pragma once

#include <cstdint>
#include <limits>

namespace mobilab {

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// SplitMix64 stream. Satisfies UniformRandomBitGenerator so it plugs into
// the <random> distributions. Streams are addressed by (seed, key...) so any
// lineage, permutation or replicate can be regenerated without touching the
// others.
class Stream {
public:
    using result_type = std::uint64_t;

    explicit constexpr Stream(std::uint64_t state) noexcept : state_(state) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        return splitmix64_mix(state_);
    }

    // Uniform double in [0, 1).
    constexpr double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

inline constexpr std::uint64_t derive_key(std::uint64_t seed, std::uint64_t a) noexcept {
    return splitmix64_mix(seed ^ splitmix64_mix(a + 0x632be59bd9b4e019ULL));
}

inline constexpr Stream substream(std::uint64_t seed, std::uint64_t a) noexcept {
    return Stream(derive_key(seed, a));
}

inline constexpr Stream substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
    return Stream(derive_key(derive_key(seed, a), b));
}

inline constexpr Stream substream(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                  std::uint64_t c) noexcept {
    return Stream(derive_key(derive_key(derive_key(seed, a), b), c));
}

}  // namespace mobilab
