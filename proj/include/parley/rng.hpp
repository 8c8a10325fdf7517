// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace parley {

/// Seeded session generator.
///
/// Only the raw mt19937_64 stream is used (its output sequence is fixed by the
/// standard); index sampling and shuffling are done here so replays are
/// identical across standard library implementations.
class Rng {
public:
    static constexpr std::string_view algorithm = "mt19937_64";

    explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t draws() const noexcept { return draws_; }

    std::uint64_t next() {
        ++draws_;
        return engine_();
    }

    /// Uniform integer in [0, n). Rejection sampling removes modulo bias.
    std::size_t uniform_index(std::size_t n) {
        const auto bound = static_cast<std::uint64_t>(n);
        const std::uint64_t threshold = (0 - bound) % bound;
        std::uint64_t x = next();
        while (x < threshold)
            x = next();
        return static_cast<std::size_t>(x % bound);
    }

    /// Fisher-Yates, last position first.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = uniform_index(i);
            using std::swap;
            swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
    std::uint64_t draws_ = 0;
};

} // namespace parley
