#pragma once

// Portable seeded randomness for the search tree.
//
// Every constant below is part of the reproducibility contract: changing any
// of them changes every seeded result the library produces.
//
//   kGolden  = 0x9E3779B97F4A7C15   (SplitMix64 increment, 2^64 / phi)
//   kMul1    = 0xBF58476D1CE4E5B9   (SplitMix64 finalizer, first multiplier)
//   kMul2    = 0x94D049BB133111EB   (SplitMix64 finalizer, second multiplier)
//
//   mix(z)   = z ^= z >> 30; z *= kMul1; z ^= z >> 27; z *= kMul2; z ^ (z >> 31)
//
//   derive_seed(root, [p0, p1, ...]):
//     h = root
//     for each p: h = mix(h + kGolden + mix(p + kGolden))
//     return h
//
// The chaining is non-commutative, so [0, 1] and [1, 0] give different seeds.

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>

namespace tts {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
inline constexpr std::uint64_t kMul1 = 0xBF58476D1CE4E5B9ULL;
inline constexpr std::uint64_t kMul2 = 0x94D049BB133111EBULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * kMul1;
    z = (z ^ (z >> 27)) * kMul2;
    return z ^ (z >> 31);
}

/// Derive a child seed from `root` along `path`. Throws UsageError on an empty path.
std::uint64_t derive_seed(std::uint64_t root, std::span<const std::uint64_t> path);
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path);

/// 64-bit FNV-1a; used to fold string keys into seed paths.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// SplitMix64 with explicit, copyable state.
class SplitMix64 {
public:
    constexpr explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next() noexcept {
        state_ += kGolden;
        return mix64(state_);
    }

    /// Uniform double in [0, 1) with 53 bits of resolution.
    constexpr double uniform01() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, bound). Lemire's multiply-shift with rejection.
    std::uint64_t uniform_below(std::uint64_t bound) noexcept;

    /// Standard normal via Box-Muller (cosine branch only; one draw consumes two words).
    double gaussian() noexcept;

    constexpr std::uint64_t state() const noexcept { return state_; }

private:
    std::uint64_t state_;
};

}  // namespace tts
