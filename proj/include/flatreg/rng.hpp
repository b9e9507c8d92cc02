#ifndef FLATREG_RNG_HPP
#define FLATREG_RNG_HPP

#include <array>
#include <cstdint>

namespace flatreg {

// Counter-based generator: Philox4x32-10 (Salmon et al., Random123).
// A generator is identified by (seed, stream). The 64-bit seed forms the
// Philox key; the stream id occupies the upper counter words, so streams
// derived from the same seed never overlap. Replica r of a run uses
// Rng(seed, r), which makes parallel replicas reproducible independent of
// scheduling.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_lo_(static_cast<std::uint32_t>(stream)),
          stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

    // One Philox block: encrypts (counter, stream) under the key.
    static std::array<std::uint32_t, 4> block(const std::array<std::uint32_t, 4>& counter,
                                              const std::array<std::uint32_t, 2>& key);

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    // Uniform on [0, 1): 53 random bits.
    double uniform();

    // Uniform integer in [0, n), n >= 1. Multiply-shift mapping of a 64-bit
    // draw; the bias is O(n / 2^64) and irrelevant at desk scale.
    std::uint64_t uniform_int(std::uint64_t n);

    // Standard normal via Box-Muller. Draws two uniforms per pair and caches
    // the second value.
    double normal();

    // +1 or -1 with equal probability.
    double rademacher();

    // true with probability p.
    bool bernoulli(double p);

private:
    std::array<std::uint32_t, 2> key_;
    std::uint32_t stream_lo_, stream_hi_;
    std::uint64_t block_index_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int buffered_ = 0;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

}  // namespace flatreg

#endif
