#include "tts/rng.hpp"

#include <cmath>
#include <numbers>

#include "tts/core.hpp"

namespace tts {

std::uint64_t derive_seed(std::uint64_t root, std::span<const std::uint64_t> path) {
    if (path.empty()) throw UsageError("derive_seed: path must be non-empty");
    std::uint64_t h = root;
    for (std::uint64_t p : path) h = mix64(h + kGolden + mix64(p + kGolden));
    return h;
}

std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) {
    return derive_seed(root, std::span<const std::uint64_t>(path.begin(), path.size()));
}

std::uint64_t SplitMix64::uniform_below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    __extension__ using u128 = unsigned __int128;
    u128 m = static_cast<u128>(next()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        while (low < threshold) {
            m = static_cast<u128>(next()) * bound;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

double SplitMix64::gaussian() noexcept {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace tts
