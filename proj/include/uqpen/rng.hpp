#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace uqpen {

/**
 * Deterministic, splittable random stream.
 *
 * Generator: xoshiro256++ seeded by expanding the 64-bit seed with four
 * rounds of splitmix64. The integer sequence is fixed by the seed and
 * identical on every platform; floating-point draws depend only on IEEE-754
 * double arithmetic (uniforms take the top 53 bits, normals use Box-Muller).
 *
 * split(i) derives a child stream from the parent's seed and the index i
 * (splitmix64 finalizer over seed + GOLDEN*(i+1)), so children are
 * independent of how much the parent has been consumed.
 */
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();

    // Uniform double in [0, 1).
    double next_uniform();

    // Standard normal via Box-Muller; consumes exactly two uniforms.
    double next_normal();

    // Uniform integer in [0, bound); bound must be > 0.
    std::uint64_t next_below(std::uint64_t bound);

    RngStream split(std::uint64_t index) const;

    // Fisher-Yates, driven by next_below.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_;
};

} // namespace uqpen
