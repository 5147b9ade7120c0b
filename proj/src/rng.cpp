#include "uqpen/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace uqpen {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t splitmix64(std::uint64_t& s) {
    std::uint64_t z = (s += kGolden);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

} // namespace

RngStream::RngStream(std::uint64_t seed) : seed_(seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) {
        word = splitmix64(s);
    }
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double RngStream::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_normal() {
    // 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double two_pi = 6.283185307179586476925286766559;
    return r * std::cos(two_pi * u2);
}

std::uint64_t RngStream::next_below(std::uint64_t bound) {
    if (bound == 0) {
        throw std::invalid_argument("next_below: bound must be positive");
    }
    // Multiply-shift range reduction (Lemire); deterministic, bias < 2^-64.
    const unsigned __int128 wide =
        static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(bound);
    return static_cast<std::uint64_t>(wide >> 64);
}

RngStream RngStream::split(std::uint64_t index) const {
    return RngStream(mix64(seed_ + kGolden * (index + 1)));
}

} // namespace uqpen
